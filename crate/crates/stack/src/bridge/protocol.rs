//! Websocket JSON frames, version 1.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

pub const PROTOCOL_VERSION: u32 = 1;

/// Client to bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    Subscribe {
        channel: String,
    },
    Unsubscribe {
        channel: String,
    },
    Teleop {
        v: f64,
        w: f64,
    },
    SetGoal {
        x: f64,
        y: f64,
        #[serde(default)]
        id: Option<Json>,
    },
    Reset {
        #[serde(default)]
        id: Option<Json>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Subscribe { .. } => "subscribe",
            Command::Unsubscribe { .. } => "unsubscribe",
            Command::Teleop { .. } => "teleop",
            Command::SetGoal { .. } => "set_goal",
            Command::Reset { .. } => "reset",
        }
    }
}

/// Bridge to client. Sample-like frames may be dropped under backpressure;
/// the rest never are.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub json: Json,
    pub droppable: bool,
}

impl Frame {
    pub fn kind(&self) -> &str {
        self.json["type"].as_str().unwrap_or("")
    }

    pub fn hello() -> Self {
        Self::essential(json!({"type": "hello", "v": PROTOCOL_VERSION}))
    }

    pub fn error(reason: impl Into<String>, cmd: Option<&str>, id: Option<&Json>) -> Self {
        let mut j = json!({"type": "error", "reason": reason.into()});
        if let Some(c) = cmd {
            j["cmd"] = c.into();
        }
        if let Some(id) = id {
            j["id"] = id.clone();
        }
        Self::essential(j)
    }

    pub fn ack(cmd: &str, id: Option<&Json>, mut body: Json) -> Self {
        body["type"] = "ack".into();
        body["cmd"] = cmd.into();
        if let Some(id) = id {
            body["id"] = id.clone();
        }
        Self::essential(body)
    }

    pub fn essential(json: Json) -> Self {
        Self { json, droppable: false }
    }

    pub fn droppable(json: Json) -> Self {
        Self { json, droppable: true }
    }
}

/// Occupancy probability to 0..=255.
pub fn quantize(p: f32) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Run-length pairs `[value, count]`.
pub fn rle_encode(cells: &[u8]) -> Vec<(u8, u32)> {
    let mut out: Vec<(u8, u32)> = Vec::new();
    for &c in cells {
        match out.last_mut() {
            Some((v, n)) if *v == c => *n += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

pub fn rle_decode(runs: &[(u8, u32)]) -> Vec<u8> {
    runs.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n as usize)).collect()
}
