use std::sync::Arc;

use robomesh_msg::{decode, json, MessageSchema, SchemaCatalog};
use robomesh_net::Envelope;

use crate::logkit::format_cell;

/// Turns envelopes of one schema into output lines.
pub struct Tap {
    schema: Arc<MessageSchema>,
    field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TapLine {
    Out(String),
    Warning(String),
}

impl Tap {
    /// Fails for an unknown schema or, with `field`, a path the schema lacks.
    pub fn new(catalog: &SchemaCatalog, schema: &str, field: Option<&str>) -> Result<Self, String> {
        let schema = Arc::clone(catalog.by_name(schema).ok_or_else(|| format!("unknown schema {schema:?}"))?);
        if let Some(f) = field {
            let probe = robomesh_msg::Value::default_struct(&schema);
            if probe.lookup(&schema, f).is_none() && !f.contains('[') {
                return Err(format!("{} has no field {f:?}", schema.name));
            }
        }
        Ok(Self {
            schema,
            field: field.map(str::to_string),
        })
    }

    /// CSV header, when extracting a field.
    pub fn header(&self) -> Option<String> {
        self.field.as_ref().map(|f| format!("recv_time_us,{f}"))
    }

    pub fn line(&self, env: &Envelope) -> TapLine {
        let fp = self.schema.fingerprint();
        if env.fingerprint != fp {
            return TapLine::Warning(format!(
                "{}: fingerprint {:016x} is not {} ({fp:016x}), skipped",
                env.channel, env.fingerprint, self.schema.name
            ));
        }
        let value = match decode(&self.schema, &env.payload) {
            Ok(v) => v,
            Err(e) => return TapLine::Warning(format!("{}: {e}", env.channel)),
        };
        match &self.field {
            Some(f) => match value.lookup(&self.schema, f) {
                Some(v) => TapLine::Out(format!("{},{}", env.recv_time_us, format_cell(v))),
                None => TapLine::Warning(format!("{}: no {f} in sample", env.channel)),
            },
            None => TapLine::Out(
                serde_json::json!({
                    "channel": env.channel,
                    "recv_time_us": env.recv_time_us,
                    "value": json::to_json(&self.schema, &value),
                })
                .to_string(),
            ),
        }
    }
}
