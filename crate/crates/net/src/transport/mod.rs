//! Connectionless pub-sub over UDP.
//!
//! An [`Endpoint`] publishes envelopes to channels and routes received ones
//! into bounded per-subscription FIFOs. By default it uses a host-local
//! multicast group; when multicast cannot be set up it falls back to a list
//! of unicast loopback ports, each endpoint binding one of them and sending
//! to all others. An endpoint's own publications are delivered to its own
//! subscriptions in-process, never through the socket.

pub mod packet;
pub mod reassembly;

use std::collections::{HashMap, VecDeque};
use std::io::ErrorKind;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, UdpSocket};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock, Weak};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use socket2::{Domain, Protocol, Socket, Type};
use thiserror::Error;

use packet::{EnvelopeHeader, Packet, MAX_PAYLOAD};
use reassembly::Reassembler;

pub const DEFAULT_GROUP: Ipv4Addr = Ipv4Addr::new(239, 255, 76, 67);
pub const DEFAULT_PORT: u16 = 7667;
pub const DEFAULT_MAX_DATAGRAM: usize = 1400;
pub const DEFAULT_QUEUE_CAPACITY: usize = 64;
/// Ports in the loopback fallback list.
pub const DEFAULT_PORT_SPAN: u16 = 16;
pub const ENV_UDP: &str = "ROBOMESH_UDP";

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("bad transport address {0:?}: {1}")]
    Address(String, String),
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("bind failed: {0}")]
    Bind(std::io::Error),
    #[error("channel name is {0} bytes, limit is 255")]
    ChannelTooLong(usize),
    #[error("payload is {0} bytes, limit is 64 MiB")]
    PayloadTooLarge(usize),
    #[error("send failed: {0}")]
    Send(std::io::Error),
}

pub fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_micros() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// All endpoints join `group:port`.
    Multicast { group: Ipv4Addr, port: u16 },
    /// Endpoints bind one of `base..base + span` on 127.0.0.1 and send to all.
    Loopback { base: u16, span: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointConfig {
    pub mode: Mode,
    pub ttl: u32,
    /// Interface used for multicast.
    pub iface: Ipv4Addr,
    pub max_datagram: usize,
    pub queue_capacity: usize,
    pub reassembly_cap: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Multicast {
                group: DEFAULT_GROUP,
                port: DEFAULT_PORT,
            },
            ttl: 0,
            iface: Ipv4Addr::LOCALHOST,
            max_datagram: DEFAULT_MAX_DATAGRAM,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            reassembly_cap: reassembly::DEFAULT_BYTE_CAP,
        }
    }
}

impl FromStr for EndpointConfig {
    type Err = TransportError;

    /// `ip:port[?ttl=N&iface=IP&span=N&mtu=N&queue=N]`. A multicast ip selects
    /// multicast mode; any other ip selects the loopback port list.
    fn from_str(s: &str) -> Result<Self, TransportError> {
        let bad = |why: &str| TransportError::Address(s.to_string(), why.to_string());
        let (addr, query) = s.split_once('?').unwrap_or((s, ""));
        let addr: SocketAddrV4 = addr.trim().parse().map_err(|_| bad("expected ip:port"))?;
        let mut cfg = EndpointConfig::default();
        let mut span = DEFAULT_PORT_SPAN;
        for kv in query.split('&').filter(|kv| !kv.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("query items are key=value"))?;
            let num = || v.parse::<u64>().map_err(|_| bad(&format!("{k} must be an integer")));
            match k {
                "ttl" => cfg.ttl = num()? as u32,
                "iface" => cfg.iface = v.parse().map_err(|_| bad("iface must be an IPv4 address"))?,
                "span" => span = num()? as u16,
                "mtu" => cfg.max_datagram = num()? as usize,
                "queue" => cfg.queue_capacity = num()? as usize,
                _ => return Err(bad(&format!("unknown option {k}"))),
            }
        }
        cfg.mode = if addr.ip().is_multicast() {
            Mode::Multicast {
                group: *addr.ip(),
                port: addr.port(),
            }
        } else {
            Mode::Loopback {
                base: addr.port(),
                span,
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl EndpointConfig {
    /// `ROBOMESH_UDP` if set, otherwise the default group.
    pub fn from_env() -> Result<Self, TransportError> {
        match std::env::var(ENV_UDP) {
            Ok(s) if !s.trim().is_empty() => s.parse(),
            _ => Ok(Self::default()),
        }
    }

    pub fn multicast(group: Ipv4Addr, port: u16) -> Self {
        Self {
            mode: Mode::Multicast { group, port },
            ..Self::default()
        }
    }

    pub fn loopback(base: u16, span: u16) -> Self {
        Self {
            mode: Mode::Loopback { base, span },
            ..Self::default()
        }
    }

    /// The string form accepted by `from_str`.
    pub fn to_url(&self) -> String {
        match self.mode {
            Mode::Multicast { group, port } => format!(
                "{group}:{port}?ttl={}&iface={}&mtu={}&queue={}",
                self.ttl, self.iface, self.max_datagram, self.queue_capacity
            ),
            Mode::Loopback { base, span } => format!(
                "127.0.0.1:{base}?span={span}&mtu={}&queue={}",
                self.max_datagram, self.queue_capacity
            ),
        }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.max_datagram < 512 || self.max_datagram > 65507 {
            return Err(TransportError::Config(format!(
                "max_datagram must be in [512, 65507], got {}",
                self.max_datagram
            )));
        }
        if self.queue_capacity == 0 {
            return Err(TransportError::Config("queue_capacity must be >= 1".into()));
        }
        if let Mode::Loopback { base, span } = self.mode {
            if span == 0 || base.checked_add(span - 1).is_none() {
                return Err(TransportError::Config("loopback port span out of range".into()));
            }
        }
        Ok(())
    }
}

/// A received (or locally delivered) message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub channel: String,
    pub fingerprint: u64,
    pub sequence: u64,
    pub send_time_us: u64,
    pub recv_time_us: u64,
    pub payload: Arc<[u8]>,
}

/// Exact channel name, or a prefix followed by `*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChannelFilter {
    Exact(String),
    Prefix(String),
}

impl ChannelFilter {
    pub fn parse(s: &str) -> Self {
        match s.strip_suffix('*') {
            Some(prefix) => ChannelFilter::Prefix(prefix.to_string()),
            None => ChannelFilter::Exact(s.to_string()),
        }
    }

    pub fn matches(&self, channel: &str) -> bool {
        match self {
            ChannelFilter::Exact(c) => c == channel,
            ChannelFilter::Prefix(p) => channel.starts_with(p.as_str()),
        }
    }
}

impl std::fmt::Display for ChannelFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelFilter::Exact(c) => f.write_str(c),
            ChannelFilter::Prefix(p) => write!(f, "{p}*"),
        }
    }
}

struct Queue {
    filters: Vec<ChannelFilter>,
    capacity: usize,
    items: Mutex<VecDeque<Envelope>>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl Queue {
    fn push(&self, env: Envelope) {
        let mut items = self.items.lock().unwrap();
        if items.len() >= self.capacity {
            items.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        items.push_back(env);
        drop(items);
        self.ready.notify_one();
    }
}

/// Bounded FIFO of envelopes matching a filter; when full the oldest is
/// dropped and counted.
pub struct Subscription {
    queue: Arc<Queue>,
    // Keeps the endpoint (and its receive thread) alive.
    _endpoint: Endpoint,
}

impl Subscription {
    pub fn filters(&self) -> &[ChannelFilter] {
        &self.queue.filters
    }

    pub fn capacity(&self) -> usize {
        self.queue.capacity
    }

    pub fn drop_count(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.queue.items.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        self.queue.items.lock().unwrap().pop_front()
    }

    /// Oldest queued envelope, waiting up to `timeout` for one.
    pub fn recv(&self, timeout: Duration) -> Option<Envelope> {
        let deadline = Instant::now() + timeout;
        let mut items = self.queue.items.lock().unwrap();
        loop {
            if let Some(e) = items.pop_front() {
                return Some(e);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            items = self.queue.ready.wait_timeout(items, deadline - now).unwrap().0;
        }
    }

    pub fn drain(&self) -> Vec<Envelope> {
        self.queue.items.lock().unwrap().drain(..).collect()
    }
}

struct Shared {
    config: EndpointConfig,
    send: UdpSocket,
    targets: Vec<SocketAddr>,
    own_source: SocketAddr,
    local_addr: SocketAddr,
    mode: Mode,
    queues: RwLock<Vec<Weak<Queue>>>,
    sequences: Mutex<HashMap<String, u64>>,
    next_message_id: AtomicU64,
    reassembler: Mutex<Reassembler>,
    running: AtomicBool,
    received_datagrams: AtomicU64,
}

impl Shared {
    fn dispatch(&self, env: Envelope) {
        let queues = self.queues.read().unwrap();
        let mut dead = false;
        for q in queues.iter() {
            match q.upgrade() {
                Some(q) if q.filters.iter().any(|f| f.matches(&env.channel)) => q.push(env.clone()),
                Some(_) => {}
                None => dead = true,
            }
        }
        drop(queues);
        if dead {
            self.queues.write().unwrap().retain(|q| q.strong_count() > 0);
        }
    }

    fn handle(&self, from: SocketAddr, datagram: &[u8]) {
        let recv_time_us = now_us();
        let env = |h: EnvelopeHeader, payload: Arc<[u8]>| Envelope {
            channel: h.channel,
            fingerprint: h.fingerprint,
            sequence: h.sequence,
            send_time_us: h.send_time_us,
            recv_time_us,
            payload,
        };
        match packet::parse(datagram) {
            Some(Packet::Short { header, payload }) => self.dispatch(env(header, payload.into())),
            Some(Packet::Frag { message_id, index, count, header, payload }) => {
                let done = self.reassembler.lock().unwrap().accept(
                    from,
                    message_id,
                    index,
                    count,
                    header,
                    payload,
                    Instant::now(),
                );
                if let Some((h, p)) = done {
                    self.dispatch(env(h, p.into()));
                }
            }
            None => log::debug!("dropping malformed datagram from {from}"),
        }
    }
}

struct Guard {
    shared: Arc<Shared>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl Drop for Guard {
    fn drop(&mut self) {
        self.shared.running.store(false, Ordering::SeqCst);
        if let Some(t) = self.thread.lock().unwrap().take() {
            let _ = t.join();
        }
    }
}

/// Cheaply cloneable handle; the socket closes when the last clone (and
/// every subscription) is dropped.
#[derive(Clone)]
pub struct Endpoint {
    guard: Arc<Guard>,
}

const RECV_BUFFER: usize = 4 << 20;

fn multicast_sockets(cfg: &EndpointConfig, group: Ipv4Addr, port: u16) -> std::io::Result<(UdpSocket, UdpSocket)> {
    let recv = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
    recv.set_reuse_address(true)?;
    recv.set_reuse_port(true)?;
    let _ = recv.set_recv_buffer_size(RECV_BUFFER);
    recv.bind(&SocketAddr::from((group, port)).into())?;
    recv.join_multicast_v4(&group, &cfg.iface)?;
    let send = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
    send.bind(&SocketAddr::from((cfg.iface, 0)).into())?;
    send.set_multicast_if_v4(&cfg.iface)?;
    send.set_multicast_ttl_v4(cfg.ttl)?;
    send.set_multicast_loop_v4(true)?;
    let send: UdpSocket = send.into();
    // Probe: some sandboxes accept the options but cannot route the group.
    send.send_to(&[], (group, port))?;
    Ok((recv.into(), send))
}

fn loopback_sockets(base: u16, span: u16) -> Result<(UdpSocket, UdpSocket), TransportError> {
    let mut last_err = None;
    for port in base..=base + (span - 1) {
        let s = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP)).map_err(TransportError::Bind)?;
        let _ = s.set_recv_buffer_size(RECV_BUFFER);
        match s.bind(&SocketAddr::from((Ipv4Addr::LOCALHOST, port)).into()) {
            Ok(()) => {
                let send = UdpSocket::bind((Ipv4Addr::LOCALHOST, 0)).map_err(TransportError::Bind)?;
                return Ok((s.into(), send));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(TransportError::Bind(last_err.unwrap_or_else(|| std::io::Error::other("empty port span"))))
}

impl Endpoint {
    pub fn open(config: EndpointConfig) -> Result<Self, TransportError> {
        config.validate()?;
        let (recv, send, mode) = match config.mode {
            Mode::Multicast { group, port } => match multicast_sockets(&config, group, port) {
                Ok((r, s)) => (r, s, config.mode),
                Err(e) => {
                    log::warn!("multicast {group}:{port} unavailable ({e}); using loopback ports {port}+{DEFAULT_PORT_SPAN}");
                    let (r, s) = loopback_sockets(port, DEFAULT_PORT_SPAN)?;
                    (r, s, Mode::Loopback { base: port, span: DEFAULT_PORT_SPAN })
                }
            },
            Mode::Loopback { base, span } => {
                let (r, s) = loopback_sockets(base, span)?;
                (r, s, config.mode)
            }
        };
        let local_addr = recv.local_addr().map_err(TransportError::Bind)?;
        let own_source = send.local_addr().map_err(TransportError::Bind)?;
        let targets = match mode {
            Mode::Multicast { group, port } => vec![SocketAddr::from((group, port))],
            Mode::Loopback { base, span } => (base..=base + (span - 1))
                .map(|p| SocketAddr::from((Ipv4Addr::LOCALHOST, p)))
                .filter(|a| *a != local_addr)
                .collect(),
        };
        recv.set_read_timeout(Some(Duration::from_millis(50)))
            .map_err(TransportError::Bind)?;
        let shared = Arc::new(Shared {
            reassembler: Mutex::new(Reassembler::new(reassembly::DEFAULT_MAX_AGE, config.reassembly_cap)),
            config,
            send,
            targets,
            own_source,
            local_addr,
            mode,
            queues: RwLock::new(Vec::new()),
            sequences: Mutex::new(HashMap::new()),
            next_message_id: AtomicU64::new(rand::random::<u64>() >> 1),
            running: AtomicBool::new(true),
            received_datagrams: AtomicU64::new(0),
        });
        let worker = Arc::clone(&shared);
        let thread = std::thread::Builder::new()
            .name("robomesh-recv".into())
            .spawn(move || receive_loop(worker, recv))
            .map_err(TransportError::Bind)?;
        Ok(Self {
            guard: Arc::new(Guard {
                shared,
                thread: Mutex::new(Some(thread)),
            }),
        })
    }

    fn shared(&self) -> &Shared {
        &self.guard.shared
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.shared().config
    }

    /// The mode actually in use (after any multicast fallback).
    pub fn mode(&self) -> Mode {
        self.shared().mode
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.shared().local_addr
    }

    pub fn received_datagrams(&self) -> u64 {
        self.shared().received_datagrams.load(Ordering::Relaxed)
    }

    pub fn subscribe(&self, filter: &str, capacity: usize) -> Subscription {
        self.subscribe_any(&[filter], capacity)
    }

    /// One FIFO fed by every channel matching any of `filters`; each
    /// envelope is queued once even if several filters match.
    pub fn subscribe_any(&self, filters: &[&str], capacity: usize) -> Subscription {
        let queue = Arc::new(Queue {
            filters: filters.iter().map(|f| ChannelFilter::parse(f)).collect(),
            capacity: capacity.max(1),
            items: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            dropped: AtomicU64::new(0),
        });
        self.shared().queues.write().unwrap().push(Arc::downgrade(&queue));
        Subscription {
            queue,
            _endpoint: self.clone(),
        }
    }

    /// Subscribes with the configured default queue capacity.
    pub fn subscribe_default(&self, filter: &str) -> Subscription {
        self.subscribe(filter, self.config().queue_capacity)
    }

    /// Publishes one message; returns the sequence number it was given.
    pub fn publish(&self, channel: &str, fingerprint: u64, payload: &[u8]) -> Result<u64, TransportError> {
        if channel.len() > 255 {
            return Err(TransportError::ChannelTooLong(channel.len()));
        }
        if payload.len() > MAX_PAYLOAD {
            return Err(TransportError::PayloadTooLarge(payload.len()));
        }
        let s = self.shared();
        let sequence = {
            let mut seqs = s.sequences.lock().unwrap();
            let n = seqs.entry(channel.to_string()).or_insert(0);
            *n += 1;
            *n
        };
        let header = EnvelopeHeader {
            fingerprint,
            sequence,
            send_time_us: now_us(),
            channel: channel.to_string(),
        };
        let message_id = s.next_message_id.fetch_add(1, Ordering::Relaxed);
        let datagrams = packet::encode_datagrams(&header, payload, s.config.max_datagram, message_id);
        s.dispatch(Envelope {
            channel: header.channel,
            fingerprint,
            sequence,
            send_time_us: header.send_time_us,
            recv_time_us: now_us(),
            payload: payload.into(),
        });
        for d in &datagrams {
            for t in &s.targets {
                match s.send.send_to(d, t) {
                    Ok(_) => {}
                    // Nobody bound to that fallback port.
                    Err(e) if e.kind() == ErrorKind::ConnectionRefused => {}
                    Err(e) => return Err(TransportError::Send(e)),
                }
            }
            // Lets receivers drain their sockets on small machines.
            std::thread::yield_now();
        }
        Ok(sequence)
    }
}

fn receive_loop(shared: Arc<Shared>, socket: UdpSocket) {
    let mut buf = vec![0u8; 65536];
    let mut last_expire = Instant::now();
    while shared.running.load(Ordering::SeqCst) {
        match socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                if from == shared.own_source {
                    continue;
                }
                shared.received_datagrams.fetch_add(1, Ordering::Relaxed);
                shared.handle(from, &buf[..n]);
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {}
            Err(e) => {
                log::warn!("receive error: {e}");
                std::thread::sleep(Duration::from_millis(10));
            }
        }
        if last_expire.elapsed() > Duration::from_millis(250) {
            shared.reassembler.lock().unwrap().expire(Instant::now());
            last_expire = Instant::now();
        }
    }
}
