#![allow(dead_code)]

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use robomesh::logkit::{parse_log, LogContents, LogWriter};
use robomesh_msg::types::{JointState, Pose2D, Twist2D};
use robomesh_msg::{decode, FieldType, Message, MessageSchema, Value};
use robomesh_net::{EndpointConfig, NodeOptions, RegistryServer};

/// A private registry and multicast port, so tests do not hear each other.
pub fn network() -> (RegistryServer, NodeOptions) {
    let reg = RegistryServer::bind("127.0.0.1:0").unwrap();
    let port = rand::rng().random_range(20_000..60_000);
    let opts = NodeOptions::new(reg.local_addr().to_string(), EndpointConfig::multicast("239.255.76.67".parse().unwrap(), port));
    (reg, opts)
}

/// Arrival times every `period` us from a random phase, with jitter.
fn arrivals(rng: &mut ChaCha8Rng, start: u64, end: u64, period: u64) -> Vec<u64> {
    let mut t = start + rng.random_range(0..period);
    let mut out = Vec::new();
    while t <= end {
        // Some arrivals snap to a coarse grid so channels share timestamps.
        out.push(if rng.random_bool(0.1) { t / 10_000 * 10_000 } else { t + rng.random_range(0..3_000) });
        t += period;
    }
    out
}

/// Mixed-rate log: poses, twists and joint states at unrelated periods.
pub fn random_log(rng: &mut ChaCha8Rng) -> LogContents {
    let epoch = 1_700_000_000_000_000u64 + rng.random_range(0..1_000_000_000);
    let end = epoch + rng.random_range(200_000..3_000_000u64);
    let mut events: Vec<(u64, &str, u64, Vec<u8>)> = Vec::new();
    let period = rng.random_range(5_000..120_000);
    for t in arrivals(rng, epoch, end, period) {
        let p = Pose2D {
            x: rng.random_range(-5.0..5.0),
            y: rng.random_range(-5.0..5.0),
            theta: rng.random_range(-PI..PI),
        };
        events.push((t, "robot/pose", Pose2D::fingerprint(), p.encode().unwrap()));
    }
    let period = rng.random_range(5_000..120_000);
    for t in arrivals(rng, epoch, end, period) {
        let tw = Twist2D {
            v: rng.random_range(-1.0..1.0),
            w: rng.random_range(-2.0..2.0),
        };
        events.push((t, "teleop/twist", Twist2D::fingerprint(), tw.encode().unwrap()));
    }
    if rng.random_bool(0.8) {
        let joints = rng.random_range(0..4usize);
        let period = rng.random_range(20_000..400_000);
        for t in arrivals(rng, epoch, end, period) {
            let js = JointState {
                names: (0..joints).map(|i| format!("j{i}")).collect(),
                positions: (0..joints).map(|_| rng.random_range(-3.0..3.0)).collect(),
                velocities: (0..joints).map(|_| rng.random_range(-1.0..1.0)).collect(),
                efforts: Vec::new(),
            };
            events.push((t, "arm/joints", JointState::fingerprint(), js.encode().unwrap()));
        }
    }
    // A stray record of the wrong type on a space channel.
    if rng.random_bool(0.3) {
        events.push((epoch + 100_000, "robot/pose", Twist2D::fingerprint(), Twist2D { v: 1.0, w: 1.0 }.encode().unwrap()));
    }
    events.sort_by_key(|e| e.0);
    let mut w = LogWriter::new(Vec::new()).unwrap();
    for (t, c, fp, p) in &events {
        w.append(*t, c, *fp, p).unwrap();
    }
    parse_log(&w.into_inner().unwrap()[..]).unwrap()
}

fn wrap_angle(a: f64) -> f64 {
    let mut r = a % TAU;
    while r > PI {
        r -= TAU;
    }
    while r <= -PI {
        r += TAU;
    }
    r
}

fn mix(a: f64, b: f64, alpha: f64, angle: bool) -> f64 {
    if angle {
        wrap_angle(a + wrap_angle(b - a) * alpha)
    } else {
        a + (b - a) * alpha
    }
}

fn text(v: &Value) -> String {
    match v {
        Value::Bool(b) => format!("{b}"),
        Value::I8(x) => format!("{x}"),
        Value::I16(x) => format!("{x}"),
        Value::I32(x) => format!("{x}"),
        Value::I64(x) => format!("{x}"),
        Value::F32(x) => format!("{x}"),
        Value::F64(x) => format!("{x}"),
        Value::String(s) => s.clone(),
        Value::Array(xs) => xs.iter().map(text).collect::<Vec<_>>().join(";"),
        Value::Struct(xs) => xs.iter().map(text).collect::<Vec<_>>().join(","),
    }
}

/// Leaf cells of `a`, or of the blend of `a` and `b` when `b` is given.
fn cells(schema: &MessageSchema, a: &Value, b: Option<(&Value, f64)>, out: &mut Vec<String>) {
    let Value::Struct(xs) = a else { panic!("not a struct") };
    for (i, f) in schema.fields.iter().enumerate() {
        let other = b.map(|(bv, alpha)| match bv {
            Value::Struct(ys) => (&ys[i], alpha),
            _ => panic!("not a struct"),
        });
        match &f.ty {
            FieldType::Struct(inner) => cells(inner, &xs[i], other, out),
            ty => out.push(text(&blend(ty, &xs[i], other, f.angle))),
        }
    }
}

fn blend(ty: &FieldType, a: &Value, b: Option<(&Value, f64)>, angle: bool) -> Value {
    let Some((b, alpha)) = b else { return a.clone() };
    match (ty, a, b) {
        (FieldType::F64, Value::F64(x), Value::F64(y)) => Value::F64(mix(*x, *y, alpha, angle)),
        (FieldType::F32, Value::F32(x), Value::F32(y)) => Value::F32(mix(*x as f64, *y as f64, alpha, angle) as f32),
        (FieldType::FixedArray(e, _) | FieldType::VarArray(e), Value::Array(xs), Value::Array(ys))
            if matches!(**e, FieldType::F64 | FieldType::F32) && xs.len() == ys.len() =>
        {
            Value::Array(xs.iter().zip(ys).map(|(x, y)| blend(e, x, Some((y, alpha)), angle)).collect())
        }
        _ => a.clone(),
    }
}

fn leaf_names(schema: &MessageSchema, prefix: &str, out: &mut Vec<String>) {
    for f in &schema.fields {
        let name = format!("{prefix}.{}", f.name);
        match &f.ty {
            FieldType::Struct(inner) => leaf_names(inner, &name, out),
            _ => out.push(name),
        }
    }
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Reference resampler: for every tick, scans the whole log for the
/// bracketing messages of each channel. `interp` is false for zero-order hold.
pub fn brute_force_csv(log: &LogContents, space: &[(String, Arc<MessageSchema>)], rate_hz: f64, interp: bool) -> String {
    let mut header = vec!["t_us".to_string(), "epoch_us".to_string()];
    let mut series = Vec::new();
    for (channel, schema) in space {
        leaf_names(schema, channel, &mut header);
        let msgs: Vec<(u64, Value)> = log
            .records
            .iter()
            .filter(|r| &r.channel == channel && r.fingerprint == schema.fingerprint())
            .map(|r| (r.recv_time_us, decode(schema, &r.payload).unwrap()))
            .collect();
        series.push((schema, msgs));
    }
    let mut lines = vec![header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(",")];
    let t0 = log.records.iter().map(|r| r.recv_time_us).min();
    let t_end = log.records.iter().map(|r| r.recv_time_us).max();
    if let (Some(t0), Some(t_end)) = (t0, t_end) {
        let mut k = 0u64;
        loop {
            let t = t0 + (k as f64 * 1e6 / rate_hz).round() as u64;
            if t > t_end {
                break;
            }
            let mut row = vec![(t - t0).to_string(), t.to_string()];
            for (schema, msgs) in &series {
                let before = msgs.iter().rposition(|(tm, _)| *tm <= t);
                let after = msgs.iter().position(|(tm, _)| *tm > t);
                match before {
                    None => {
                        let mut n = Vec::new();
                        leaf_names(schema, "", &mut n);
                        row.extend(std::iter::repeat_n(String::new(), n.len()));
                    }
                    Some(i) => {
                        let other = match after {
                            Some(j) if interp && msgs.len() >= 2 => {
                                let alpha = (t - msgs[i].0) as f64 / (msgs[j].0 - msgs[i].0) as f64;
                                Some((&msgs[j].1, alpha))
                            }
                            _ => None,
                        };
                        cells(schema, &msgs[i].1, other, &mut row);
                    }
                }
            }
            lines.push(row.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
            k += 1;
        }
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

pub struct Fidelity {
    pub recorded: usize,
    pub identical: bool,
    /// Median over records of |replayed offset - recorded offset|, us.
    pub median_timing_error_us: u64,
}

/// Publishes `n` messages on three channels at uneven gaps, records them,
/// replays the log at speed 1 on a fresh network and records again.
pub fn record_replay_rerecord(n: usize, dir: &std::path::Path) -> Fidelity {
    use robomesh::logkit::{read_log, replay, Recorder, ReplayOptions};
    use robomesh_net::{Node, ShutdownToken};
    use std::time::Duration;

    let first = dir.join("first.log");
    let second = dir.join("second.log");
    {
        let (_reg, opts) = network();
        let src = Node::create("src", &opts).unwrap();
        let logger = Node::create("logger", &opts).unwrap();
        let rec = Recorder::start(&logger, &["src/*"], &first).unwrap();
        let pose = src.create_publisher::<Pose2D>("pose").unwrap();
        let twist = src.create_publisher::<Twist2D>("twist").unwrap();
        let joints = src.create_publisher::<JointState>("joints").unwrap();
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        for i in 0..n {
            match i % 3 {
                0 => pose.publish(&Pose2D { x: i as f64, y: rng.random(), theta: rng.random_range(-PI..PI) }).unwrap(),
                1 => twist.publish(&Twist2D { v: rng.random(), w: -(i as f64) }).unwrap(),
                _ => joints
                    .publish(&JointState {
                        names: vec!["a".into(), "b".into()],
                        positions: vec![rng.random(), rng.random()],
                        velocities: vec![],
                        efforts: vec![],
                    })
                    .unwrap(),
            };
            std::thread::sleep(Duration::from_micros(rng.random_range(500..8_000)));
        }
        std::thread::sleep(Duration::from_millis(200));
        rec.stop().unwrap();
    }
    let original = read_log(&first).unwrap();
    {
        let (_reg, opts) = network();
        let player = Node::create("player", &opts).unwrap();
        let logger = Node::create("logger", &opts).unwrap();
        let rec = Recorder::start(&logger, &["src/*"], &second).unwrap();
        std::thread::sleep(Duration::from_millis(100));
        replay(&player, &original, &ReplayOptions::default(), &ShutdownToken::new()).unwrap();
        std::thread::sleep(Duration::from_millis(200));
        rec.stop().unwrap();
    }
    let again = read_log(&second).unwrap();
    let key = |l: &LogContents| l.records.iter().map(|r| (r.channel.clone(), r.fingerprint, r.payload.clone())).collect::<Vec<_>>();
    let identical = original.records.len() == n && key(&original) == key(&again);
    let mut errors: Vec<u64> = match (original.records.first(), again.records.first()) {
        (Some(a0), Some(b0)) => original
            .records
            .iter()
            .zip(&again.records)
            .map(|(a, b)| (a.recv_time_us - a0.recv_time_us).abs_diff(b.recv_time_us - b0.recv_time_us))
            .collect(),
        _ => vec![u64::MAX],
    };
    errors.sort_unstable();
    Fidelity {
        recorded: original.records.len(),
        identical,
        median_timing_error_us: errors[errors.len() / 2],
    }
}

pub struct SwitchRun {
    /// (channel, fingerprint) pairs seen on the wire during the episode.
    pub channels: std::collections::BTreeSet<(String, u64)>,
    pub trace: Vec<String>,
    pub driver: String,
    /// Pose observations after each step, encoded.
    pub pose_payloads: Vec<Vec<u8>>,
}

/// One scripted episode through the env layer against the simulator
/// (`sim`) or the stub hardware serving the same channels.
pub fn sim_real_episode(sim: bool, steps: usize) -> SwitchRun {
    use robomesh::envkit::{action, EnvConfig, Environment};
    use robomesh::nodes::sim2d::{start_sim, SimNodeConfig, SimRole};
    use robomesh::pipeline::{desk_world, loop_script};
    use robomesh_core::World;
    use robomesh_net::Node;
    use std::time::Duration;

    let (_reg, opts) = network();
    let role = if sim { SimRole::Sim } else { SimRole::StubHardware };
    let (running, _) = start_sim(
        &opts,
        World::new(desk_world(3)).unwrap(),
        SimNodeConfig {
            role,
            ..SimNodeConfig::default()
        },
    )
    .unwrap();
    let observer = Node::create("observer", &opts).unwrap();
    let wire = observer.create_raw_subscriber(&["*"], 1 << 16).unwrap();
    let config = EnvConfig::from_yaml(&format!(
        "name: desk\nsim: {sim}\nstep_rate_hz: 20\nhorizon: 1000\n\
         observation_space: {{sim/pose: pose_2d_t, sim/scan: laser_scan_t}}\n\
         action_space: {{teleop/twist: twist_2d_t}}\nreset_service: sim/reset\n"
    ))
    .unwrap();
    let node = Node::create("desk", &opts).unwrap();
    let mut env = Environment::with_node(node, config, Duration::from_secs(2)).unwrap();
    let trace = env.enable_trace();
    let script = loop_script(1.0, 0.3);
    let (_, info) = env.reset().unwrap();
    let mut pose_payloads = Vec::new();
    for k in 0..steps {
        let tw = script.at(k as f64 * 0.05);
        let r = env.step(&action(&[("teleop/twist", Twist2D { v: tw.v, w: tw.w })])).unwrap();
        let p: Pose2D = r.observation.decode("sim/pose").unwrap();
        pose_payloads.push(p.encode().unwrap());
    }
    drop(env);
    drop(running);
    let channels = wire
        .drain()
        .into_iter()
        .map(|e| (e.channel, e.fingerprint))
        .collect();
    SwitchRun {
        channels,
        trace: trace.events(),
        driver: info["driver"].as_str().unwrap_or_default().to_string(),
        pose_payloads,
    }
}

/// Spy statistics for a node publishing at `rate_hz` for `seconds`, seen
/// over the last `window_s` through a plain endpoint.
pub fn measure_spy(rate_hz: f64, seconds: f64, window_s: f64) -> robomesh::tools::SpyRow {
    use robomesh::tools::Spy;
    use robomesh_net::transport::now_us;
    use robomesh_net::{Endpoint, Flow, Node};
    use std::time::{Duration, Instant};

    let (_reg, opts) = network();
    let node = Node::create("ticker", &opts).unwrap();
    let publisher = node.create_publisher::<Twist2D>("tick").unwrap();
    let listener = Endpoint::open(opts.transport.clone()).unwrap();
    let sub = listener.subscribe_any(&["ticker/*"], 1 << 14);
    let token = node.shutdown_token();
    let spinner = std::thread::spawn(move || {
        node.spin(rate_hz, |_| {
            publisher.publish(&Twist2D::default())?;
            Ok(Flow::Continue)
        })
    });
    let mut spy = Spy::new(window_s);
    let end = Instant::now() + Duration::from_secs_f64(seconds);
    while Instant::now() < end {
        if let Some(e) = sub.recv(Duration::from_millis(20)) {
            spy.observe(&e.channel, e.fingerprint, e.recv_time_us);
        }
    }
    let row = spy.rows(now_us()).into_iter().find(|r| r.channel == "ticker/tick").expect("channel seen");
    token.trigger();
    spinner.join().unwrap().unwrap();
    row
}

/// Every node, non-service publisher and exact subscription of the
/// snapshot must appear in the graph, and nothing else.
pub fn graph_matches_snapshot(graph: &robomesh::tools::Graph, snap: &robomesh_net::Snapshot) -> Result<(), String> {
    use robomesh::tools::EdgeKind;
    use std::collections::BTreeSet;

    let names: Vec<&str> = snap.nodes.iter().map(|n| n.name.as_str()).collect();
    let gnames: Vec<&str> = graph.nodes.iter().map(|n| n.name.as_str()).collect();
    if names != gnames {
        return Err(format!("nodes {gnames:?} vs registry {names:?}"));
    }
    let published: BTreeSet<String> = snap
        .nodes
        .iter()
        .flat_map(|n| &n.publishers)
        .filter(|p| !p.channel.starts_with("__srv/"))
        .map(|p| p.channel.clone())
        .collect();
    let mut want = BTreeSet::new();
    for n in &snap.nodes {
        for p in n.publishers.iter().filter(|p| !p.channel.starts_with("__srv/")) {
            want.insert((n.name.clone(), p.channel.clone(), EdgeKind::Publish));
            let v = graph.channels.iter().find(|c| c.name == p.channel).ok_or(format!("channel {} missing", p.channel))?;
            if !v.fingerprints.contains(&format!("{:016x}", p.fingerprint)) {
                return Err(format!("{}: fingerprint {:016x} missing", p.channel, p.fingerprint));
            }
        }
        for s in n.subscribers.iter().filter(|s| !s.starts_with("__srv/")) {
            match s.strip_suffix('*') {
                None => {
                    want.insert((s.clone(), n.name.clone(), EdgeKind::Subscribe));
                }
                Some(prefix) => {
                    let hits: Vec<&String> = published.iter().filter(|c| c.starts_with(prefix)).collect();
                    if hits.is_empty() {
                        want.insert((s.clone(), n.name.clone(), EdgeKind::Subscribe));
                    }
                    for c in hits {
                        want.insert((c.clone(), n.name.clone(), EdgeKind::Subscribe));
                    }
                }
            }
        }
        let services: Vec<String> = n.services.iter().filter(|s| !s.is_default).map(|s| s.name.clone()).collect();
        let gv = graph.nodes.iter().find(|g| g.name == n.name).unwrap();
        if services.iter().collect::<BTreeSet<_>>() != gv.services.iter().collect::<BTreeSet<_>>() {
            return Err(format!("{}: services {:?} vs {services:?}", n.name, gv.services));
        }
    }
    let got: BTreeSet<_> = graph
        .edges
        .iter()
        .map(|e| (e.from.clone(), e.to.clone(), e.kind))
        .collect();
    if got != want {
        return Err(format!("edges differ: extra {:?}, missing {:?}", got.difference(&want).collect::<Vec<_>>(), want.difference(&got).collect::<Vec<_>>()));
    }
    Ok(())
}
