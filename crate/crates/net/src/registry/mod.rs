//! Discovery registry: node records, the line-delimited JSON protocol, the
//! server and the client.
//!
//! Every request is one JSON object on one line, tagged by `op`; every reply
//! is one JSON object on one line with `ok` and either the requested data or
//! an `error` string. Fingerprints are written as 16-digit hex strings so
//! browsers and `jq` see them losslessly.

mod client;
mod server;
mod state;

use serde::{Deserialize, Serialize};

pub use client::{RegistryClient, RegistryError};
pub use server::RegistryServer;
pub use state::{RegistryState, HEARTBEAT_PERIOD, MISSED_BEATS};

pub const DEFAULT_ADDRESS: &str = "127.0.0.1:7660";
pub const ENV_REGISTRY: &str = "ROBOMESH_REGISTRY";
/// Marker carried by the names of the registry's built-in services.
pub const DEFAULT_SERVICE_MARKER: &str = "__DEFAULT_SERVICE";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Registry address from `ROBOMESH_REGISTRY`, else the default.
pub fn address_from_env() -> String {
    match std::env::var(ENV_REGISTRY) {
        Ok(s) if !s.trim().is_empty() => s.trim().to_string(),
        _ => DEFAULT_ADDRESS.to_string(),
    }
}

pub mod hex_u64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(s.trim_start_matches("0x"), 16).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublisherInfo {
    pub channel: String,
    #[serde(with = "hex_u64")]
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub name: String,
    #[serde(with = "hex_u64")]
    pub request_fingerprint: u64,
    #[serde(with = "hex_u64")]
    pub reply_fingerprint: u64,
    #[serde(default)]
    pub is_default: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeRecord {
    pub name: String,
    #[serde(default)]
    pub publishers: Vec<PublisherInfo>,
    /// Channel filters, exact or `prefix*`.
    #[serde(default)]
    pub subscribers: Vec<String>,
    #[serde(default)]
    pub services: Vec<ServiceDescriptor>,
    /// Opaque token identifying where the node lives (host, pid, socket).
    #[serde(default)]
    pub address: String,
    /// Set by the registry.
    #[serde(default)]
    pub last_heartbeat_us: u64,
}

impl NodeRecord {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    /// Lists sorted so equal graphs serialize identically.
    pub fn normalized(mut self) -> Self {
        self.publishers.sort();
        self.publishers.dedup();
        self.subscribers.sort();
        self.subscribers.dedup();
        self.services.sort();
        self.services.dedup();
        self
    }
}

/// A service together with the node that provides it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServiceEntry {
    pub node: String,
    pub address: String,
    pub descriptor: ServiceDescriptor,
}

impl ServiceEntry {
    /// `node/service`, the name callers use.
    pub fn full_name(&self) -> String {
        format!("{}/{}", self.node, self.descriptor.name)
    }
}

/// Full graph as seen by the registry at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub v: u32,
    pub time_us: u64,
    /// Sorted by name.
    pub nodes: Vec<NodeRecord>,
    pub default_services: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Register { record: NodeRecord },
    Heartbeat { node: String },
    Update { record: NodeRecord },
    Deregister { node: String },
    ListNodes,
    ListServices,
    LookupService { name: String },
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<NodeRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub services: Option<Vec<ServiceEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Snapshot>,
}

impl Response {
    pub fn ok() -> Self {
        Self {
            ok: true,
            ..Self::default()
        }
    }

    pub fn error(reason: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(reason.into()),
            ..Self::default()
        }
    }
}

/// Names of the services every registry provides.
pub fn default_service_names() -> Vec<String> {
    ["deregister", "list_nodes", "list_services", "lookup_service", "snapshot"]
        .iter()
        .map(|op| format!("{DEFAULT_SERVICE_MARKER}/{op}"))
        .collect()
}
