//! Resampling a log onto a uniform time grid, one CSV row per tick.

use std::io::Write;
use std::sync::Arc;

use robomesh_msg::{decode, FieldType, MessageSchema, SchemaCatalog, Value};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::format::LogContents;
use crate::envkit::{SpaceError, SpaceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    /// Zero-order hold: the last message at or before the tick.
    Latest,
    /// Linear interpolation of float fields between bracketing messages.
    Interp,
}

impl std::str::FromStr for ResampleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "latest" => Ok(Self::Latest),
            "interp" => Ok(Self::Interp),
            _ => Err(format!("mode must be latest or interp, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExportOptions {
    pub rate_hz: f64,
    pub mode: ResampleMode,
    /// Space channels that may be absent from the log; their columns stay empty.
    pub allow_missing: Vec<String>,
}

impl ExportOptions {
    pub fn new(rate_hz: f64, mode: ResampleMode) -> Self {
        Self {
            rate_hz,
            mode,
            allow_missing: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportReport {
    pub rows: usize,
    pub columns: Vec<String>,
    pub warnings: Vec<String>,
    /// Records on space channels whose fingerprint did not match the schema.
    pub skipped_records: usize,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("rate must be positive, got {0}")]
    BadRate(f64),
    #[error("channel {0} has no messages in the log")]
    MissingChannel(String),
    #[error("record {index} on {channel}: {reason}")]
    Decode { index: u64, channel: String, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Leaf columns of a schema: every non-struct field, depth first.
pub fn flatten_columns(schema: &MessageSchema) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(schema: &MessageSchema, prefix: &str, out: &mut Vec<String>) {
        for f in &schema.fields {
            let path = if prefix.is_empty() { f.name.clone() } else { format!("{prefix}.{}", f.name) };
            match &f.ty {
                FieldType::Struct(inner) => walk(inner, &path, out),
                _ => out.push(path),
            }
        }
    }
    walk(schema, "", &mut out);
    out
}

/// Cell text for a leaf value. Arrays are joined with ';'.
pub fn format_cell(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::I8(x) => x.to_string(),
        Value::I16(x) => x.to_string(),
        Value::I32(x) => x.to_string(),
        Value::I64(x) => x.to_string(),
        Value::F32(x) => x.to_string(),
        Value::F64(x) => x.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(format_cell).collect::<Vec<_>>().join(";"),
        Value::Struct(fields) => fields.iter().map(format_cell).collect::<Vec<_>>().join(","),
    }
}

fn leaf_cells(schema: &MessageSchema, v: &Value, out: &mut Vec<String>) {
    let Value::Struct(fields) = v else {
        unreachable!("message values are structs")
    };
    for (f, fv) in schema.fields.iter().zip(fields) {
        match &f.ty {
            FieldType::Struct(inner) => leaf_cells(inner, fv, out),
            _ => out.push(format_cell(fv)),
        }
    }
}

fn wrap(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut r = a % tau;
    if r <= -std::f64::consts::PI {
        r += tau;
    } else if r > std::f64::consts::PI {
        r -= tau;
    }
    r
}

/// `a + (b - a) * alpha`, or along the shorter arc for angles, wrapped back
/// into `(-pi, pi]`.
pub fn lerp_scalar(a: f64, b: f64, alpha: f64, angle: bool) -> f64 {
    if angle {
        wrap(a + wrap(b - a) * alpha)
    } else {
        a + (b - a) * alpha
    }
}

fn lerp_leaf(ty: &FieldType, a: &Value, b: &Value, alpha: f64, angle: bool) -> Value {
    match (ty, a, b) {
        (FieldType::F64, Value::F64(x), Value::F64(y)) => Value::F64(lerp_scalar(*x, *y, alpha, angle)),
        (FieldType::F32, Value::F32(x), Value::F32(y)) => {
            Value::F32(lerp_scalar(f64::from(*x), f64::from(*y), alpha, angle) as f32)
        }
        (FieldType::FixedArray(e, _) | FieldType::VarArray(e), Value::Array(xs), Value::Array(ys))
            if e.is_float() && xs.len() == ys.len() =>
        {
            Value::Array(xs.iter().zip(ys).map(|(x, y)| lerp_leaf(e, x, y, alpha, angle)).collect())
        }
        (FieldType::Struct(s), _, _) => interpolate(s, a, b, alpha),
        _ => a.clone(),
    }
}

/// Interpolates float fields of two values of `schema`; everything else
/// holds `a`.
pub fn interpolate(schema: &MessageSchema, a: &Value, b: &Value, alpha: f64) -> Value {
    let (Value::Struct(xs), Value::Struct(ys)) = (a, b) else {
        return a.clone();
    };
    Value::Struct(
        schema
            .fields
            .iter()
            .zip(xs.iter().zip(ys))
            .map(|(f, (x, y))| lerp_leaf(&f.ty, x, y, alpha, f.angle))
            .collect(),
    )
}

/// Tick times in microseconds: `t0 + round(k * 1e6 / rate)` up to the last record.
pub fn tick_times(t0: u64, t_end: u64, rate_hz: f64) -> Vec<u64> {
    let mut out = Vec::new();
    for k in 0u64.. {
        let t = t0 + (k as f64 * 1e6 / rate_hz).round() as u64;
        if t > t_end {
            break;
        }
        out.push(t);
    }
    out
}

struct Track {
    schema: Arc<MessageSchema>,
    times: Vec<u64>,
    values: Vec<Value>,
    mode: ResampleMode,
    cursor: usize,
    width: usize,
}

impl Track {
    /// Appends this channel's cells at tick `t`; ticks must be increasing.
    fn cells(&mut self, t: u64, out: &mut Vec<String>) {
        while self.cursor < self.times.len() && self.times[self.cursor] <= t {
            self.cursor += 1;
        }
        if self.cursor == 0 {
            out.extend(std::iter::repeat_n(String::new(), self.width));
            return;
        }
        let i = self.cursor - 1;
        let value = match self.mode {
            ResampleMode::Interp if self.cursor < self.times.len() => {
                let (ta, tb) = (self.times[i], self.times[self.cursor]);
                let alpha = (t - ta) as f64 / (tb - ta) as f64;
                interpolate(&self.schema, &self.values[i], &self.values[self.cursor], alpha)
            }
            _ => self.values[i].clone(),
        };
        leaf_cells(&self.schema, &value, out);
    }
}

/// Writes the CSV for `log` resampled over `space`. Columns are `t_us`
/// (since the first record), `epoch_us`, then `<channel>.<field path>`.
pub fn export_csv<W: Write>(
    log: &LogContents,
    space: &SpaceSpec,
    catalog: &SchemaCatalog,
    options: &ExportOptions,
    out: W,
) -> Result<ExportReport, ExportError> {
    if !(options.rate_hz > 0.0 && options.rate_hz.is_finite()) {
        return Err(ExportError::BadRate(options.rate_hz));
    }
    let channels = space.resolve(catalog)?;
    let mut report = ExportReport::default();
    let mut tracks = Vec::new();
    report.columns = vec!["t_us".into(), "epoch_us".into()];
    for (channel, schema) in channels {
        let fp = schema.fingerprint();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for r in log.records.iter().filter(|r| r.channel == channel) {
            if r.fingerprint != fp {
                report.skipped_records += 1;
                continue;
            }
            let v = decode(&schema, &r.payload).map_err(|e| ExportError::Decode {
                index: r.event_index,
                channel: channel.clone(),
                reason: e.to_string(),
            })?;
            times.push(r.recv_time_us);
            values.push(v);
        }
        if times.is_empty() && !options.allow_missing.contains(&channel) {
            return Err(ExportError::MissingChannel(channel));
        }
        let mut mode = options.mode;
        if mode == ResampleMode::Interp && times.len() < 2 {
            report
                .warnings
                .push(format!("{channel}: {} message(s), interpolation falls back to latest", times.len()));
            mode = ResampleMode::Latest;
        }
        let cols = flatten_columns(&schema);
        report.columns.extend(cols.iter().map(|c| format!("{channel}.{c}")));
        tracks.push(Track {
            schema,
            times,
            values,
            mode,
            cursor: 0,
            width: cols.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&report.columns)?;
    if let Some((t0, t_end)) = log.span_us() {
        let mut row = Vec::with_capacity(report.columns.len());
        for t in tick_times(t0, t_end, options.rate_hz) {
            row.clear();
            row.push((t - t0).to_string());
            row.push(t.to_string());
            for track in &mut tracks {
                track.cells(t, &mut row);
            }
            w.write_record(&row)?;
            report.rows += 1;
        }
    }
    w.flush()?;
    Ok(report)
}
