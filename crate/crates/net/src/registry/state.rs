use std::collections::BTreeMap;
use std::time::Duration;

use super::{default_service_names, NodeRecord, Request, Response, ServiceEntry, Snapshot, DEFAULT_SERVICE_MARKER, SNAPSHOT_VERSION};

pub const HEARTBEAT_PERIOD: Duration = Duration::from_secs(1);
pub const MISSED_BEATS: u32 = 3;

/// The registry's data, with time passed in explicitly. Records silent for
/// longer than `ttl` are pruned before every operation.
#[derive(Debug, Clone)]
pub struct RegistryState {
    nodes: BTreeMap<String, NodeRecord>,
    ttl_us: u64,
}

impl Default for RegistryState {
    fn default() -> Self {
        Self::new(HEARTBEAT_PERIOD * MISSED_BEATS)
    }
}

impl RegistryState {
    pub fn new(ttl: Duration) -> Self {
        Self {
            nodes: BTreeMap::new(),
            ttl_us: ttl.as_micros() as u64,
        }
    }

    pub fn ttl(&self) -> Duration {
        Duration::from_micros(self.ttl_us)
    }

    fn prune(&mut self, now_us: u64) {
        let ttl = self.ttl_us;
        self.nodes.retain(|name, r| {
            let live = now_us.saturating_sub(r.last_heartbeat_us) <= ttl;
            if !live {
                log::info!("node {name} expired");
            }
            live
        });
    }

    pub fn live_nodes(&mut self, now_us: u64) -> Vec<NodeRecord> {
        self.prune(now_us);
        self.nodes.values().cloned().collect()
    }

    pub fn services(&mut self, now_us: u64) -> Vec<ServiceEntry> {
        self.prune(now_us);
        let mut out: Vec<ServiceEntry> = self
            .nodes
            .values()
            .flat_map(|r| {
                r.services.iter().map(|d| ServiceEntry {
                    node: r.name.clone(),
                    address: r.address.clone(),
                    descriptor: d.clone(),
                })
            })
            .collect();
        out.sort();
        out
    }

    pub fn snapshot(&mut self, now_us: u64) -> Snapshot {
        Snapshot {
            v: SNAPSHOT_VERSION,
            time_us: now_us,
            nodes: self.live_nodes(now_us),
            default_services: default_service_names(),
        }
    }

    pub fn handle(&mut self, req: Request, now_us: u64) -> Response {
        self.prune(now_us);
        match req {
            Request::Register { record } => {
                if let Err(e) = check_name(&record.name) {
                    return Response::error(e);
                }
                if self.nodes.contains_key(&record.name) {
                    return Response::error(format!("node {} is already registered", record.name));
                }
                let mut record = record.normalized();
                record.last_heartbeat_us = now_us;
                self.nodes.insert(record.name.clone(), record);
                Response::ok()
            }
            Request::Heartbeat { node } => match self.nodes.get_mut(&node) {
                Some(r) => {
                    r.last_heartbeat_us = now_us;
                    Response::ok()
                }
                None => Response {
                    warning: Some(format!("heartbeat from unknown node {node} ignored")),
                    ..Response::ok()
                },
            },
            Request::Update { record } => match self.nodes.get_mut(&record.name) {
                Some(r) => {
                    let mut record = record.normalized();
                    record.last_heartbeat_us = now_us;
                    *r = record;
                    Response::ok()
                }
                None => Response::error(format!("unknown node {}", record.name)),
            },
            Request::Deregister { node } => match self.nodes.remove(&node) {
                Some(_) => Response::ok(),
                None => Response {
                    warning: Some(format!("unknown node {node}")),
                    ..Response::ok()
                },
            },
            Request::ListNodes => Response {
                nodes: Some(self.live_nodes(now_us)),
                ..Response::ok()
            },
            Request::ListServices => Response {
                services: Some(self.services(now_us)),
                ..Response::ok()
            },
            Request::LookupService { name } => {
                let found = name.split_once('/').and_then(|(node, svc)| {
                    let r = self.nodes.get(node)?;
                    let d = r.services.iter().find(|d| d.name == svc)?;
                    Some(ServiceEntry {
                        node: r.name.clone(),
                        address: r.address.clone(),
                        descriptor: d.clone(),
                    })
                });
                match found {
                    Some(entry) => Response {
                        service: Some(entry),
                        ..Response::ok()
                    },
                    None => Response::error(format!("service {name} not found")),
                }
            }
            Request::Snapshot => Response {
                snapshot: Some(self.snapshot(now_us)),
                ..Response::ok()
            },
        }
    }
}

fn check_name(name: &str) -> Result<(), String> {
    if name.is_empty() || name.contains('/') || name.contains(char::is_whitespace) {
        return Err(format!("invalid node name {name:?}"));
    }
    if name.starts_with("__") || name == DEFAULT_SERVICE_MARKER {
        return Err(format!("node name {name:?} is reserved"));
    }
    Ok(())
}
