//! Nodes: named owners of publishers, subscribers and services, registered
//! with the discovery registry and kept alive by a heartbeat.

mod pubsub;
mod service;
mod spin;

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use robomesh_msg::{EncodeError, Message};
use thiserror::Error;

use crate::registry::{self, NodeRecord, PublisherInfo, RegistryClient, RegistryError, HEARTBEAT_PERIOD};
use crate::transport::{Endpoint, EndpointConfig, TransportError};

pub use pubsub::{Publisher, RawPublisher, Sample, Subscriber};
pub use service::{reply_channel, request_channel, CallOptions, ServiceError, ServiceReply, ServiceRequest};
pub use spin::{spin, BoxError, Flow, ShutdownToken, SpinStats};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("invalid name {0:?}: {1}")]
    InvalidName(String, &'static str),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("node already publishes {0}")]
    DuplicatePublisher(String),
    #[error("node already provides service {0}")]
    DuplicateService(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("spin rate must be positive, got {0}")]
    BadRate(f64),
    #[error("step callback failed: {0}")]
    Callback(String),
}

#[derive(Debug, Clone)]
pub struct NodeOptions {
    pub registry: String,
    pub transport: EndpointConfig,
    pub heartbeat: Duration,
}

impl NodeOptions {
    pub fn new(registry: impl Into<String>, transport: EndpointConfig) -> Self {
        Self {
            registry: registry.into(),
            transport,
            heartbeat: HEARTBEAT_PERIOD,
        }
    }

    /// `ROBOMESH_REGISTRY` and `ROBOMESH_UDP`, with defaults.
    pub fn from_env() -> Result<Self, RuntimeError> {
        Ok(Self::new(registry::address_from_env(), EndpointConfig::from_env()?))
    }
}

fn check_segment(s: &str, what: &'static str) -> Result<(), RuntimeError> {
    if s.is_empty() {
        return Err(RuntimeError::InvalidName(s.into(), "empty"));
    }
    if s.contains('/') {
        return Err(RuntimeError::InvalidName(s.into(), what));
    }
    if s.starts_with("__") {
        return Err(RuntimeError::InvalidName(s.into(), "names starting with __ are reserved"));
    }
    if s.contains(|c: char| c.is_whitespace() || c == '*') {
        return Err(RuntimeError::InvalidName(s.into(), "whitespace and '*' are not allowed"));
    }
    Ok(())
}

/// Registry connection plus the record it mirrors; shared with the
/// heartbeat thread.
struct Directory {
    client: Mutex<RegistryClient>,
    record: Mutex<NodeRecord>,
}

impl Directory {
    fn modify(&self, f: impl FnOnce(&mut NodeRecord)) -> Result<(), RegistryError> {
        let mut record = self.record.lock().unwrap();
        f(&mut record);
        let snapshot = record.clone();
        drop(record);
        self.client.lock().unwrap().update(&snapshot)
    }
}

struct Stopper {
    stopped: Mutex<bool>,
    wake: Condvar,
}

impl Stopper {
    fn new() -> Arc<Self> {
        Arc::new(Self {
            stopped: Mutex::new(false),
            wake: Condvar::new(),
        })
    }

    fn stop(&self) {
        *self.stopped.lock().unwrap() = true;
        self.wake.notify_all();
    }

    /// Sleeps up to `d`; true once stopped.
    fn wait(&self, d: Duration) -> bool {
        let g = self.stopped.lock().unwrap();
        *self.wake.wait_timeout_while(g, d, |s| !*s).unwrap().0
    }
}

struct NodeInner {
    name: String,
    endpoint: Endpoint,
    directory: Arc<Directory>,
    shutdown: ShutdownToken,
    heartbeat_stop: Arc<Stopper>,
    heartbeat: Mutex<Option<JoinHandle<()>>>,
    services: Mutex<Vec<service::Worker>>,
    calls: AtomicU64,
    closed: AtomicBool,
}

impl NodeInner {
    fn close(&self) {
        if self.closed.swap(true, Ordering::SeqCst) {
            return;
        }
        for w in self.services.lock().unwrap().drain(..) {
            w.stop();
        }
        self.heartbeat_stop.stop();
        if let Some(t) = self.heartbeat.lock().unwrap().take() {
            let _ = t.join();
        }
        if let Err(e) = self.directory.client.lock().unwrap().deregister(&self.name) {
            log::debug!("deregister {}: {e}", self.name);
        }
    }
}

impl Drop for NodeInner {
    fn drop(&mut self) {
        self.close();
    }
}

/// Handle to a live node. Clones share the node; it deregisters when the
/// last clone is dropped or [`Node::close`] is called.
#[derive(Clone)]
pub struct Node {
    inner: Arc<NodeInner>,
}

impl Node {
    /// Opens the transport, registers `name` and starts the heartbeat.
    pub fn create(name: &str, options: &NodeOptions) -> Result<Self, RuntimeError> {
        check_segment(name, "node names cannot contain '/'")?;
        let mut client = RegistryClient::connect(options.registry.clone())?;
        let endpoint = Endpoint::open(options.transport.clone())?;
        let mut record = NodeRecord::new(name);
        record.address = format!("pid={} udp={}", std::process::id(), endpoint.local_addr());
        client.register(&record)?;
        let directory = Arc::new(Directory {
            client: Mutex::new(client),
            record: Mutex::new(record),
        });
        let heartbeat_stop = Stopper::new();
        let heartbeat = {
            let directory = Arc::clone(&directory);
            let stop = Arc::clone(&heartbeat_stop);
            let name = name.to_string();
            let period = options.heartbeat;
            std::thread::Builder::new()
                .name(format!("{name}-heartbeat"))
                .spawn(move || heartbeat_loop(&name, &directory, &stop, period))
                .map_err(TransportError::Bind)?
        };
        Ok(Self {
            inner: Arc::new(NodeInner {
                name: name.to_string(),
                endpoint,
                directory,
                shutdown: ShutdownToken::new(),
                heartbeat_stop,
                heartbeat: Mutex::new(Some(heartbeat)),
                services: Mutex::new(Vec::new()),
                calls: AtomicU64::new(0),
                closed: AtomicBool::new(false),
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.inner.endpoint
    }

    pub fn shutdown_token(&self) -> ShutdownToken {
        self.inner.shutdown.clone()
    }

    /// The record as last sent to the registry.
    pub fn record(&self) -> NodeRecord {
        self.inner.directory.record.lock().unwrap().clone()
    }

    /// Runs `f` with the node's registry connection.
    pub fn with_registry<R>(&self, f: impl FnOnce(&mut RegistryClient) -> R) -> R {
        f(&mut self.inner.directory.client.lock().unwrap())
    }

    /// Stops services and heartbeat and deregisters; idempotent.
    pub fn close(&self) {
        self.inner.close();
    }

    fn declare_publisher(&self, channel: &str, fingerprint: u64) -> Result<(), RuntimeError> {
        let mut dup = false;
        self.inner.directory.modify(|r| {
            if r.publishers.iter().any(|p| p.channel == channel) {
                dup = true;
            } else {
                r.publishers.push(PublisherInfo {
                    channel: channel.to_string(),
                    fingerprint,
                });
            }
        })?;
        if dup {
            return Err(RuntimeError::DuplicatePublisher(channel.to_string()));
        }
        Ok(())
    }

    fn declare_subscriber(&self, filter: &str) -> Result<(), RuntimeError> {
        self.inner.directory.modify(|r| {
            if !r.subscribers.iter().any(|s| s == filter) {
                r.subscribers.push(filter.to_string());
            }
        })?;
        Ok(())
    }

    /// Publisher on `<node>/<suffix>`.
    pub fn create_publisher<M: Message>(&self, suffix: &str) -> Result<Publisher<M>, RuntimeError> {
        check_segment(suffix, "channel suffixes cannot contain '/'")?;
        let channel = format!("{}/{suffix}", self.inner.name);
        self.declare_publisher(&channel, M::fingerprint())?;
        Ok(Publisher::new(channel, self.inner.endpoint.clone()))
    }

    /// Publisher on a full channel name with an arbitrary fingerprint, for
    /// tools that republish other nodes' traffic (replay) and for reserved
    /// `__` channels.
    pub fn create_raw_publisher(&self, channel: &str, fingerprint: u64) -> Result<RawPublisher, RuntimeError> {
        if channel.is_empty() || channel.len() > 255 {
            return Err(RuntimeError::InvalidName(channel.into(), "channel must be 1 to 255 bytes"));
        }
        self.declare_publisher(channel, fingerprint)?;
        Ok(RawPublisher::new(channel.to_string(), fingerprint, self.inner.endpoint.clone()))
    }

    /// Typed subscriber; envelopes with another fingerprint are counted and
    /// discarded.
    pub fn create_subscriber<M: Message>(&self, channel: &str, queue_capacity: usize) -> Result<Subscriber<M>, RuntimeError> {
        self.declare_subscriber(channel)?;
        Ok(Subscriber::new(self.inner.endpoint.subscribe(channel, queue_capacity)))
    }

    /// Untyped subscription (recorder, spy, bridge) to every channel
    /// matching any of `filters`.
    pub fn create_raw_subscriber(&self, filters: &[&str], queue_capacity: usize) -> Result<crate::Subscription, RuntimeError> {
        for f in filters {
            self.declare_subscriber(f)?;
        }
        Ok(self.inner.endpoint.subscribe_any(filters, queue_capacity))
    }

    /// Runs `step` at `rate_hz` until it returns [`Flow::Stop`], the node's
    /// shutdown token fires, or it fails; failure closes the node.
    pub fn spin<F>(&self, rate_hz: f64, step: F) -> Result<SpinStats, RuntimeError>
    where
        F: FnMut(f64) -> Result<Flow, BoxError>,
    {
        match spin(rate_hz, &self.inner.shutdown, step) {
            Ok(stats) => Ok(stats),
            Err(e) => {
                self.close();
                Err(e)
            }
        }
    }
}

fn heartbeat_loop(name: &str, dir: &Directory, stop: &Stopper, period: Duration) {
    while !stop.wait(period) {
        let mut client = dir.client.lock().unwrap();
        match client.heartbeat(name) {
            Ok(true) => {}
            Ok(false) => {
                // Registry restarted or expired us; register again.
                let record = dir.record.lock().unwrap().clone();
                match client.register(&record) {
                    Ok(()) => log::info!("{name}: re-registered"),
                    Err(e) => log::warn!("{name}: re-register failed: {e}"),
                }
            }
            Err(e) => log::warn!("{name}: heartbeat failed: {e}"),
        }
    }
}
