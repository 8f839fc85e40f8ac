//! Browser bridge: static files plus a websocket at `/ws` carrying the
//! JSON protocol in [`protocol`].

pub mod protocol;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use robomesh_msg::types::{OccupancyGridMsg, Path2D, Pose2D, ResetReply, ResetRequest, Twist2D};
use robomesh_msg::{decode, json, Message, SchemaCatalog};
use robomesh_net::{Flow, Node, NodeOptions, RawPublisher, RuntimeError, ServiceError, Subscription};
use serde_json::{json, Value as Json};
use tungstenite::Message as WsMessage;

use crate::nodes::teleop::UI_CHANNEL;
use crate::nodes::Running;
use crate::tools::Graph;
use protocol::{quantize, rle_encode, Command, Frame};

pub const QUEUE_FRAMES: usize = 256;
pub const SAMPLE_PERIOD: Duration = Duration::from_millis(100);
pub const TOPOLOGY_PERIOD: Duration = Duration::from_secs(1);
pub const MAP_PERIOD: Duration = Duration::from_secs(1);

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub name: String,
    pub http_addr: String,
    /// Dashboard build output; a placeholder page is served without it.
    pub static_dir: Option<PathBuf>,
    pub set_goal_service: String,
    pub reset_service: String,
    pub pose_channel: String,
    pub path_channel: String,
    pub map_channel: String,
    pub service_timeout: Duration,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            name: "bridge".into(),
            http_addr: "127.0.0.1:8080".into(),
            static_dir: None,
            set_goal_service: "nav/set_goal".into(),
            reset_service: "sim/reset".into(),
            pose_channel: "slam/pose".into(),
            path_channel: "nav/path".into(),
            map_channel: "slam/map".into(),
            service_timeout: Duration::from_secs(5),
        }
    }
}

/// Outbound frames for one client, bounded with drop-oldest-droppable.
struct Outbox {
    frames: Mutex<VecDeque<Frame>>,
    dropped: std::sync::atomic::AtomicU64,
}

impl Outbox {
    fn push(&self, frame: Frame) {
        let mut q = self.frames.lock().unwrap();
        if q.len() >= QUEUE_FRAMES {
            if let Some(i) = q.iter().position(|f| f.droppable) {
                q.remove(i);
                self.dropped.fetch_add(1, Ordering::Relaxed);
            } else if frame.droppable {
                self.dropped.fetch_add(1, Ordering::Relaxed);
                return;
            }
        }
        q.push_back(frame);
    }

    fn take(&self) -> Vec<Frame> {
        self.frames.lock().unwrap().drain(..).collect()
    }
}

struct Client {
    outbox: Outbox,
    subscriptions: Mutex<BTreeSet<String>>,
    last_sample: Mutex<BTreeMap<String, Instant>>,
    closed: AtomicBool,
}

impl Client {
    fn new() -> Arc<Self> {
        Arc::new(Self {
            outbox: Outbox {
                frames: Mutex::new(VecDeque::new()),
                dropped: Default::default(),
            },
            subscriptions: Mutex::new(BTreeSet::new()),
            last_sample: Mutex::new(BTreeMap::new()),
            closed: AtomicBool::new(false),
        })
    }
}

struct Shared {
    node: Node,
    config: BridgeConfig,
    clients: Mutex<Vec<Arc<Client>>>,
    topology: Mutex<Option<Graph>>,
    teleop: RawPublisher,
    stop: AtomicBool,
}

impl Shared {
    fn broadcast(&self, frame: &Frame) {
        for c in self.clients.lock().unwrap().iter() {
            c.outbox.push(frame.clone());
        }
    }

    /// Current topology without the bridge itself.
    fn fetch_topology(&self) -> Option<Graph> {
        let snap = self.node.with_registry(|c| c.snapshot()).ok()?;
        let mut snap = snap;
        snap.nodes.retain(|n| n.name != self.node.name());
        Some(Graph::from_snapshot(&snap))
    }
}

/// A running bridge; dropping it stops the server and the node.
pub struct BridgeHandle {
    shared: Arc<Shared>,
    addr: SocketAddr,
    accept: Option<JoinHandle<()>>,
    running: Option<Running>,
}

impl BridgeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn node(&self) -> &Node {
        &self.shared.node
    }

    pub fn stop(self) {}
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
        self.running.take();
    }
}

fn topology_delta(old: &Graph, new: &Graph) -> Json {
    let names = |g: &Graph| g.nodes.iter().map(|n| n.name.clone()).collect::<BTreeSet<_>>();
    let edges = |g: &Graph| g.edges.iter().cloned().collect::<BTreeSet<_>>();
    let (on, nn) = (names(old), names(new));
    let (oe, ne) = (edges(old), edges(new));
    json!({
        "added_nodes": nn.difference(&on).collect::<Vec<_>>(),
        "removed_nodes": on.difference(&nn).collect::<Vec<_>>(),
        "added_edges": ne.difference(&oe).collect::<Vec<_>>(),
        "removed_edges": oe.difference(&ne).collect::<Vec<_>>(),
    })
}

fn topology_frame(graph: &Graph, delta: Option<Json>) -> Frame {
    Frame::essential(json!({"type": "topology", "v": 1, "graph": graph, "delta": delta}))
}

pub fn map_frame(msg: &OccupancyGridMsg) -> Frame {
    let cells: Vec<u8> = msg.cells.iter().map(|&p| quantize(p)).collect();
    let rle: Vec<[u32; 2]> = rle_encode(&cells).into_iter().map(|(v, n)| [u32::from(v), n]).collect();
    Frame::droppable(json!({
        "type": "map",
        "width": msg.width,
        "height": msg.height,
        "resolution": msg.resolution,
        "origin": {"x": msg.origin.x, "y": msg.origin.y},
        "rle": rle,
    }))
}

pub fn start_bridge(options: &NodeOptions, config: BridgeConfig) -> Result<BridgeHandle, RuntimeError> {
    let listener = TcpListener::bind(&config.http_addr).map_err(robomesh_net::TransportError::Bind)?;
    listener.set_nonblocking(true).map_err(robomesh_net::TransportError::Bind)?;
    let addr = listener.local_addr().map_err(robomesh_net::TransportError::Bind)?;
    let node = Node::create(&config.name, options)?;
    let teleop = node.create_raw_publisher(UI_CHANNEL, Twist2D::fingerprint())?;
    let poses = node.create_subscriber::<Pose2D>(&config.pose_channel, 16)?;
    let paths = node.create_subscriber::<Path2D>(&config.path_channel, 4)?;
    let maps = node.create_subscriber::<OccupancyGridMsg>(&config.map_channel, 2)?;
    let shared = Arc::new(Shared {
        node: node.clone(),
        config,
        clients: Mutex::new(Vec::new()),
        topology: Mutex::new(None),
        teleop,
        stop: AtomicBool::new(false),
    });
    let accept = {
        let shared = Arc::clone(&shared);
        std::thread::Builder::new()
            .name("bridge-accept".into())
            .spawn(move || accept_loop(listener, &shared))
            .map_err(robomesh_net::TransportError::Bind)?
    };
    let catalog = SchemaCatalog::standard();
    let mut samples: BTreeMap<String, Subscription> = BTreeMap::new();
    let mut last_topology: Option<Instant> = None;
    let mut last_map: Option<Instant> = None;
    let loop_shared = Arc::clone(&shared);
    let running = Running::spawn(node, 50.0, move |_| {
        let s = &loop_shared;
        s.clients.lock().unwrap().retain(|c| !c.closed.load(Ordering::SeqCst));
        if last_topology.is_none_or(|t| t.elapsed() >= TOPOLOGY_PERIOD) {
            last_topology = Some(Instant::now());
            if let Some(g) = s.fetch_topology() {
                let mut current = s.topology.lock().unwrap();
                if current.as_ref() != Some(&g) {
                    let delta = current.as_ref().map(|old| topology_delta(old, &g));
                    s.broadcast(&topology_frame(&g, delta));
                    *current = Some(g);
                }
            }
        }
        if let Some(p) = poses.drain().pop() {
            s.broadcast(&Frame::droppable(json!({"type": "pose", "x": p.value.x, "y": p.value.y, "theta": p.value.theta})));
        }
        for p in paths.drain() {
            s.broadcast(&Frame::essential(json!({"type": "path", "x": p.value.x, "y": p.value.y, "cost": p.value.cost})));
        }
        if let Some(m) = maps.drain().pop() {
            if last_map.is_none_or(|t| t.elapsed() >= MAP_PERIOD) {
                last_map = Some(Instant::now());
                s.broadcast(&map_frame(&m.value));
            }
        }
        // Sample subscriptions follow the union of client requests.
        let clients = s.clients.lock().unwrap().clone();
        let wanted: BTreeSet<String> = clients.iter().flat_map(|c| c.subscriptions.lock().unwrap().clone()).collect();
        for ch in &wanted {
            if !samples.contains_key(ch) {
                samples.insert(ch.clone(), s.node.create_raw_subscriber(&[ch.as_str()], 64)?);
            }
        }
        samples.retain(|ch, _| wanted.contains(ch));
        for (ch, sub) in &samples {
            let Some(env) = sub.drain().pop() else {
                continue;
            };
            let value = catalog
                .by_fingerprint(env.fingerprint)
                .and_then(|schema| decode(schema, &env.payload).ok().map(|v| (schema.name.clone(), json::to_json(schema, &v))));
            let (schema, value) = value.unwrap_or((String::new(), Json::Null));
            let frame = Frame::droppable(json!({
                "type": "sample",
                "channel": ch,
                "schema": schema,
                "fingerprint": format!("{:016x}", env.fingerprint),
                "recv_time_us": env.recv_time_us,
                "value": value,
            }));
            for c in &clients {
                if !c.subscriptions.lock().unwrap().contains(ch) {
                    continue;
                }
                let mut last = c.last_sample.lock().unwrap();
                if last.get(ch).is_none_or(|t| t.elapsed() >= SAMPLE_PERIOD) {
                    last.insert(ch.clone(), Instant::now());
                    c.outbox.push(frame.clone());
                }
            }
        }
        Ok(Flow::Continue)
    });
    Ok(BridgeHandle {
        shared,
        addr,
        accept: Some(accept),
        running: Some(running),
    })
}

fn accept_loop(listener: TcpListener, shared: &Arc<Shared>) {
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let shared = Arc::clone(shared);
                let _ = std::thread::Builder::new().name("bridge-conn".into()).spawn(move || {
                    if let Err(e) = serve_connection(stream, &shared) {
                        log::debug!("bridge connection: {e}");
                    }
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => {
                log::warn!("bridge accept: {e}");
                std::thread::sleep(Duration::from_millis(100));
            }
        }
    }
}

fn request_path(stream: &TcpStream) -> std::io::Result<String> {
    let mut buf = [0u8; 1024];
    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        let n = stream.peek(&mut buf)?;
        let head = String::from_utf8_lossy(&buf[..n]);
        if let Some(line) = head.split("\r\n").next().filter(|_| head.contains("\r\n")) {
            return Ok(line.split_whitespace().nth(1).unwrap_or("/").to_string());
        }
        if n == buf.len() || Instant::now() > deadline {
            return Ok("/".into());
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn serve_connection(stream: TcpStream, shared: &Arc<Shared>) -> Result<(), Box<dyn std::error::Error>> {
    stream.set_nonblocking(false)?;
    let path = request_path(&stream)?;
    if path == "/ws" || path.starts_with("/ws?") {
        serve_ws(stream, shared)
    } else {
        serve_static(stream, &path, shared.config.static_dir.as_deref())
    }
}

const PLACEHOLDER: &str = "<!doctype html><title>robomesh bridge</title>\
<p>robomesh bridge is running. Websocket endpoint: <code>/ws</code> (JSON protocol v1).</p>\n";

fn content_type(path: &str) -> &'static str {
    match path.rsplit('.').next() {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

fn serve_static(mut stream: TcpStream, path: &str, dir: Option<&std::path::Path>) -> Result<(), Box<dyn std::error::Error>> {
    // Consume the request head.
    let mut buf = [0u8; 4096];
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let _ = stream.read(&mut buf);
    let rel = path.split('?').next().unwrap_or("/").trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let body: Option<(Vec<u8>, &str)> = if rel.split('/').any(|p| p == ".." || p.is_empty()) {
        None
    } else if let Some(d) = dir {
        std::fs::read(d.join(rel)).ok().map(|b| (b, content_type(rel)))
    } else if rel == "index.html" {
        Some((PLACEHOLDER.as_bytes().to_vec(), "text/html; charset=utf-8"))
    } else {
        None
    };
    let (status, body, ctype) = match body {
        Some((b, t)) => ("200 OK", b, t),
        None => ("404 Not Found", b"not found\n".to_vec(), "text/plain"),
    };
    write!(stream, "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len())?;
    stream.write_all(&body)?;
    Ok(())
}

fn serve_ws(stream: TcpStream, shared: &Arc<Shared>) -> Result<(), Box<dyn std::error::Error>> {
    let mut ws = tungstenite::accept(stream)?;
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(10)))?;
    let client = Client::new();
    client.outbox.push(Frame::hello());
    let graph = shared.fetch_topology().unwrap_or_else(|| Graph::from_snapshot(&robomesh_net::Snapshot { v: 1, time_us: 0, nodes: Vec::new(), default_services: Vec::new() }));
    client.outbox.push(topology_frame(&graph, None));
    shared.clients.lock().unwrap().push(Arc::clone(&client));
    let result = client_loop(&mut ws, &client, shared);
    client.closed.store(true, Ordering::SeqCst);
    let _ = ws.close(None);
    result
}

fn client_loop(ws: &mut tungstenite::WebSocket<TcpStream>, client: &Arc<Client>, shared: &Arc<Shared>) -> Result<(), Box<dyn std::error::Error>> {
    while !shared.stop.load(Ordering::SeqCst) {
        for f in client.outbox.take() {
            ws.send(WsMessage::text(f.json.to_string()))?;
        }
        match ws.read() {
            Ok(WsMessage::Text(t)) => {
                for f in handle_command(t.as_str(), client, shared) {
                    client.outbox.push(f);
                }
            }
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn service_error(e: ServiceError) -> String {
    match e {
        ServiceError::Timeout { .. } => "timeout".into(),
        ServiceError::Remote(m) => m,
        other => other.to_string(),
    }
}

fn handle_command(text: &str, client: &Client, shared: &Shared) -> Vec<Frame> {
    let cmd: Command = match serde_json::from_str(text) {
        Ok(c) => c,
        Err(e) => return vec![Frame::error(format!("bad command: {e}"), None, None)],
    };
    let timeout = shared.config.service_timeout;
    match cmd {
        Command::Subscribe { channel } => {
            client.subscriptions.lock().unwrap().insert(channel);
            Vec::new()
        }
        Command::Unsubscribe { channel } => {
            client.subscriptions.lock().unwrap().remove(&channel);
            Vec::new()
        }
        Command::Teleop { v, w } => {
            let payload = Twist2D { v, w }.encode().expect("twist encodes");
            match shared.teleop.publish(&payload) {
                Ok(_) => Vec::new(),
                Err(e) => vec![Frame::error(e.to_string(), Some("teleop"), None)],
            }
        }
        Command::SetGoal { x, y, id } => {
            let goal = Pose2D { x, y, theta: 0.0 };
            match shared.node.call_service::<Pose2D, Path2D>(&shared.config.set_goal_service, &goal, timeout) {
                Ok(p) => vec![Frame::ack("set_goal", id.as_ref(), json!({"path": {"x": p.x, "y": p.y, "cost": p.cost}}))],
                Err(e) => vec![Frame::error(service_error(e), Some("set_goal"), id.as_ref())],
            }
        }
        Command::Reset { id } => {
            let req = ResetRequest::default();
            match shared.node.call_service::<ResetRequest, ResetReply>(&shared.config.reset_service, &req, timeout) {
                Ok(r) => vec![Frame::ack("reset", id.as_ref(), json!({"episode_id": r.episode_id}))],
                Err(e) => vec![Frame::error(service_error(e), Some("reset"), id.as_ref())],
            }
        }
    }
}
