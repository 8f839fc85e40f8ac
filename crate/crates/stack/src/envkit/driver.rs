use std::collections::BTreeMap;
use std::sync::Arc;

use robomesh_msg::{decode, encode, MessageSchema, SchemaCatalog, Value};
use robomesh_net::{Node, RuntimeError, Subscription};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::space::{SpaceError, SpaceSpec};

const SENSOR_QUEUE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    /// Channels served by the `sim2d` node.
    SimBinding,
    /// The same channels served by the `stub_hw` node.
    StubHardware,
}

impl DriverKind {
    pub fn for_sim(sim: bool) -> Self {
        if sim {
            Self::SimBinding
        } else {
            Self::StubHardware
        }
    }

    pub fn node_kind(self) -> &'static str {
        match self {
            Self::SimBinding => "sim2d",
            Self::StubHardware => "stub_hw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub component: String,
    pub sim: bool,
    /// Channels the component publishes (get_data).
    #[serde(default)]
    pub sensors: SpaceSpec,
    /// Channels the component consumes (send_command).
    #[serde(default)]
    pub commands: SpaceSpec,
}

impl DriverConfig {
    pub fn kind(&self) -> DriverKind {
        DriverKind::for_sim(self.sim)
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("channel {channel}: bound as {schema} ({expected:016x}) but {node} publishes {found:016x}")]
    SchemaMismatch {
        channel: String,
        schema: String,
        node: String,
        expected: u64,
        found: u64,
    },
    #[error("channel {0} is not a bound command channel")]
    Unbound(String),
    #[error("channel {channel}: {reason}")]
    BadValue { channel: String, reason: String },
}

/// One decoded sensor message.
#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub channel: String,
    pub value: Value,
    pub send_time_us: u64,
    pub recv_time_us: u64,
}

struct Command {
    schema: Arc<MessageSchema>,
}

/// A component's channels seen through the driver contract: `get_data`
/// for sensors, `send_command` for actuators. The binding is the same for
/// both driver kinds; only the node serving the channels differs.
pub struct Driver {
    node: Node,
    config: DriverConfig,
    sensors: BTreeMap<String, Arc<MessageSchema>>,
    sensor_sub: Option<Subscription>,
    commands: BTreeMap<String, Command>,
    mismatched: u64,
}

impl Driver {
    /// Subscribes sensors and declares command publishers. Fails when a
    /// live publisher on a bound channel has a different fingerprint.
    pub fn bind(node: &Node, config: DriverConfig, catalog: &SchemaCatalog) -> Result<Self, DriverError> {
        let sensors: BTreeMap<_, _> = config.sensors.resolve(catalog)?.into_iter().collect();
        let commands: BTreeMap<_, _> = config.commands.resolve(catalog)?.into_iter().collect();
        let live = node.with_registry(|c| c.list_nodes()).map_err(RuntimeError::from)?;
        for (channel, schema) in sensors.iter().chain(&commands) {
            for n in &live {
                for p in n.publishers.iter().filter(|p| &p.channel == channel) {
                    if p.fingerprint != schema.fingerprint() {
                        return Err(DriverError::SchemaMismatch {
                            channel: channel.clone(),
                            schema: schema.name.clone(),
                            node: n.name.clone(),
                            expected: schema.fingerprint(),
                            found: p.fingerprint,
                        });
                    }
                }
            }
        }
        let sensor_sub = if sensors.is_empty() {
            None
        } else {
            let filters: Vec<&str> = sensors.keys().map(String::as_str).collect();
            Some(node.create_raw_subscriber(&filters, SENSOR_QUEUE * sensors.len())?)
        };
        let mut bound = BTreeMap::new();
        for (channel, schema) in commands {
            node.create_raw_publisher(&channel, schema.fingerprint())?;
            bound.insert(channel, Command { schema });
        }
        Ok(Self {
            node: node.clone(),
            config,
            sensors,
            sensor_sub,
            commands: bound,
            mismatched: 0,
        })
    }

    pub fn config(&self) -> &DriverConfig {
        &self.config
    }

    pub fn kind(&self) -> DriverKind {
        self.config.kind()
    }

    /// Sensor messages received since the last call, in arrival order.
    pub fn get_data(&mut self) -> Vec<Reading> {
        let Some(sub) = &self.sensor_sub else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for env in sub.drain() {
            let Some(schema) = self.sensors.get(&env.channel) else {
                continue;
            };
            if env.fingerprint != schema.fingerprint() {
                self.mismatched += 1;
                continue;
            }
            match decode(schema, &env.payload) {
                Ok(value) => out.push(Reading {
                    channel: env.channel,
                    value,
                    send_time_us: env.send_time_us,
                    recv_time_us: env.recv_time_us,
                }),
                Err(e) => log::warn!("{}: undecodable sample: {e}", env.channel),
            }
        }
        out
    }

    /// Sensor envelopes discarded for carrying another fingerprint.
    pub fn mismatched(&self) -> u64 {
        self.mismatched
    }

    /// Encodes a command without sending it.
    pub fn prepare_command(&self, channel: &str, value: &Value) -> Result<Vec<u8>, DriverError> {
        let cmd = self.commands.get(channel).ok_or_else(|| DriverError::Unbound(channel.to_string()))?;
        encode(&cmd.schema, value).map_err(|e| DriverError::BadValue {
            channel: channel.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn send_prepared(&self, channel: &str, payload: &[u8]) -> Result<(), DriverError> {
        let cmd = self.commands.get(channel).ok_or_else(|| DriverError::Unbound(channel.to_string()))?;
        self.node
            .endpoint()
            .publish(channel, cmd.schema.fingerprint(), payload)
            .map_err(RuntimeError::from)?;
        Ok(())
    }

    pub fn send_command(&self, channel: &str, value: &Value) -> Result<(), DriverError> {
        let payload = self.prepare_command(channel, value)?;
        self.send_prepared(channel, &payload)
    }
}
