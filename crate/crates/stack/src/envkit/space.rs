use std::sync::Arc;

use indexmap::IndexMap;
use robomesh_msg::{MessageSchema, SchemaCatalog};
use serde::{Deserialize, Serialize};

/// Channel name to schema name, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpaceSpec(pub IndexMap<String, String>);

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum SpaceError {
    #[error("channel {channel}: unknown schema {schema:?}")]
    UnknownSchema { channel: String, schema: String },
    #[error("empty channel name")]
    EmptyChannel,
}

impl SpaceSpec {
    pub fn new<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self(pairs.into_iter().map(|(c, s)| (c.to_string(), s.to_string())).collect())
    }

    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn resolve(&self, catalog: &SchemaCatalog) -> Result<Vec<(String, Arc<MessageSchema>)>, SpaceError> {
        self.0
            .iter()
            .map(|(channel, schema)| {
                if channel.is_empty() {
                    return Err(SpaceError::EmptyChannel);
                }
                let s = catalog.by_name(schema).ok_or_else(|| SpaceError::UnknownSchema {
                    channel: channel.clone(),
                    schema: schema.clone(),
                })?;
                Ok((channel.clone(), Arc::clone(s)))
            })
            .collect()
    }
}
