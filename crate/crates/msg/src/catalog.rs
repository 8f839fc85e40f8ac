use std::collections::BTreeMap;
use std::sync::Arc;

use crate::schema::MessageSchema;
use crate::types::*;
use crate::Message;

/// Schemas addressable by name and by fingerprint.
#[derive(Debug, Clone, Default)]
pub struct SchemaCatalog {
    by_name: BTreeMap<String, Arc<MessageSchema>>,
    by_fingerprint: BTreeMap<u64, Arc<MessageSchema>>,
}

impl SchemaCatalog {
    /// Every standard message type.
    pub fn standard() -> Self {
        let mut c = Self::default();
        for s in [
            Time::schema(),
            Header::schema(),
            Pose2D::schema(),
            Twist2D::schema(),
            WheelCmd::schema(),
            JointState::schema(),
            LaserScan::schema(),
            OccupancyGridMsg::schema(),
            Image::schema(),
            Transform::schema(),
            Path2D::schema(),
            ResetRequest::schema(),
            ResetReply::schema(),
            EpisodeMarker::schema(),
            Empty::schema(),
        ] {
            c.insert(s);
        }
        c
    }

    pub fn insert(&mut self, schema: Arc<MessageSchema>) {
        self.by_fingerprint
            .insert(schema.fingerprint(), schema.clone());
        self.by_name.insert(schema.name.clone(), schema);
    }

    pub fn by_name(&self, name: &str) -> Option<&Arc<MessageSchema>> {
        self.by_name.get(name)
    }

    pub fn by_fingerprint(&self, fp: u64) -> Option<&Arc<MessageSchema>> {
        self.by_fingerprint.get(&fp)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }
}
