//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p robomesh --test acceptance`.

mod common;

use std::collections::HashSet;
use std::net::UdpSocket;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robomesh::envkit::SpaceSpec;
use robomesh::logkit::{export_csv, ExportOptions, ResampleMode};
use robomesh::nodes::nav::NavConfig;
use robomesh::pipeline::{desk_slam_config, desk_world, loop_script, run_mapping, run_navigation, Lockstep, MappingReport};
use robomesh::tools::Graph;
use robomesh_core::geometry::{Point, Pose, Twist};
use robomesh_core::grid::{BoolGrid, Grid, GridGeometry};
use robomesh_core::kinematics::{forward_kinematics, integrate_arc, inverse_kinematics};
use robomesh_core::nav::{squared_distance_cells, Traversability, UNREACHED};
use robomesh_core::sim::{Bounds, LidarConfig, Rect, RobotConfig, Simulator, WorldConfig};
use robomesh_core::World;
use robomesh_msg::types::{Pose2D, Twist2D};
use robomesh_msg::{decode, encode, Field, FieldType, MessageSchema, SchemaCatalog, Value};
use robomesh_net::transport::packet::{encode_datagrams, EnvelopeHeader};
use robomesh_net::{CallOptions, Endpoint, EndpointConfig, Node, RegistryClient};
use robomesh_oracles::{bfs_reachable, dijkstra, edt_brute, ray_boxes};

/// Outcome of one criterion: pass flag and a measurement summary.
type Verdict = (bool, String);

// ---- 1: codec ----

fn random_primitive(rng: &mut ChaCha8Rng) -> FieldType {
    [
        FieldType::Bool,
        FieldType::I8,
        FieldType::I16,
        FieldType::I32,
        FieldType::I64,
        FieldType::F32,
        FieldType::F64,
        FieldType::String,
    ][rng.random_range(0..8)]
    .clone()
}

fn random_leaf(rng: &mut ChaCha8Rng) -> FieldType {
    match rng.random_range(0..6) {
        0 => FieldType::fixed(random_primitive(rng), rng.random_range(0..4)),
        1 => FieldType::var(random_primitive(rng)),
        _ => random_primitive(rng),
    }
}

fn random_flat(rng: &mut ChaCha8Rng, name: &str) -> MessageSchema {
    let fields = (0..rng.random_range(0..6)).map(|i| Field::new(format!("f{i}"), random_leaf(rng))).collect();
    MessageSchema::new(name, fields).unwrap()
}

fn random_schema(rng: &mut ChaCha8Rng) -> MessageSchema {
    let mut outer = random_flat(rng, "outer_t");
    if rng.random_bool(0.5) {
        let inner = Arc::new(random_flat(rng, "inner_t"));
        outer.fields.push(Field::new("nested", FieldType::Struct(inner.clone())));
        outer.fields.push(Field::new("many", FieldType::var(FieldType::Struct(inner))));
        // Arrays of empty structs are rejected by the schema layer.
        if outer.validate().is_err() {
            outer.fields.pop();
        }
    }
    outer.validate().unwrap();
    outer
}

fn random_value(rng: &mut ChaCha8Rng, ty: &FieldType) -> Value {
    match ty {
        FieldType::Bool => Value::Bool(rng.random()),
        FieldType::I8 => Value::I8(rng.random()),
        FieldType::I16 => Value::I16(rng.random()),
        FieldType::I32 => Value::I32(rng.random()),
        FieldType::I64 => Value::I64(rng.random()),
        // Raw bit patterns, NaN payloads and signed zeros included.
        FieldType::F32 => Value::F32(f32::from_bits(rng.random())),
        FieldType::F64 => Value::F64(f64::from_bits(rng.random())),
        FieldType::String => Value::String((0..rng.random_range(0..12)).map(|_| rng.random::<char>()).collect()),
        FieldType::FixedArray(e, n) => Value::Array((0..*n).map(|_| random_value(rng, e)).collect()),
        FieldType::VarArray(e) => Value::Array((0..rng.random_range(0..5)).map(|_| random_value(rng, e)).collect()),
        FieldType::Struct(s) => random_struct(rng, s),
    }
}

fn random_struct(rng: &mut ChaCha8Rng, s: &MessageSchema) -> Value {
    Value::Struct(s.fields.iter().map(|f| random_value(rng, &f.ty)).collect())
}

fn codec() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    let mut encoded = Vec::new();
    for _ in 0..100 {
        let schema = random_schema(&mut rng);
        for _ in 0..100 {
            let value = random_struct(&mut rng, &schema);
            let bytes = encode(&schema, &value).unwrap();
            match decode(&schema, &bytes) {
                Ok(back) if back.bit_eq(&value) && encode(&schema, &back).unwrap() == bytes => {}
                _ => mismatches += 1,
            }
            if encoded.len() < 500 {
                encoded.push((schema.clone(), bytes));
            }
        }
    }
    // Fuzz: pure noise, and valid encodings with flipped, cut or grown bytes.
    let catalog = SchemaCatalog::standard();
    let standard: Vec<MessageSchema> = catalog.names().map(|n| (**catalog.by_name(n).unwrap()).clone()).collect();
    let mut crashes = 0;
    for k in 0..100_000 {
        let (schema, bytes) = if k % 2 == 0 {
            let schema = if rng.random_bool(0.5) { standard[rng.random_range(0..standard.len())].clone() } else { random_schema(&mut rng) };
            let mut b: Vec<u8> = (0..rng.random_range(0..128)).map(|_| rng.random()).collect();
            if b.len() >= 4 && rng.random_bool(0.5) {
                b[..4].copy_from_slice(&rng.random_range(0i32..4).to_be_bytes());
            }
            (schema, b)
        } else {
            let (schema, valid) = &encoded[rng.random_range(0..encoded.len())];
            let mut b = valid.clone();
            match rng.random_range(0..3) {
                0 if !b.is_empty() => {
                    let i = rng.random_range(0..b.len());
                    b[i] ^= 1 << rng.random_range(0..8);
                }
                1 => b.truncate(rng.random_range(0..=b.len())),
                _ => b.extend((0..rng.random_range(1..8)).map(|_| rng.random::<u8>())),
            }
            (schema.clone(), b)
        };
        if catch_unwind(AssertUnwindSafe(|| decode(&schema, &bytes))).is_err() {
            crashes += 1;
        }
    }
    (mismatches == 0 && crashes == 0, format!("10000 roundtrips, {mismatches} mismatches; 100000 fuzz buffers, {crashes} crashes"))
}

// ---- 2: transport ----

fn udp_port() -> u16 {
    rand::rng().random_range(20_000..60_000)
}

fn transport() -> Verdict {
    let cfg = EndpointConfig::loopback(udp_port(), 4);
    let a = Endpoint::open(cfg.clone()).unwrap();
    let b = Endpoint::open(cfg).unwrap();
    let channels = ["load/a", "load/b", "load/c", "load/d"];
    let sub = b.subscribe("load/*", 10_000);
    for i in 0..10_000u32 {
        a.publish(channels[i as usize % 4], 3, &i.to_be_bytes()).unwrap();
    }
    let mut last = [0u64; 4];
    let (mut received, mut out_of_order) = (0, 0);
    while received < 10_000 {
        let Some(e) = sub.recv(Duration::from_secs(2)) else { break };
        let k = channels.iter().position(|c| *c == e.channel).unwrap();
        if e.sequence != last[k] + 1 {
            out_of_order += 1;
        }
        last[k] = e.sequence;
        received += 1;
    }
    let lost = 10_000 - received + sub.drop_count() as usize;

    // 1 MiB blob sent as shuffled fragments with duplicates.
    let port = udp_port();
    let rx = Endpoint::open(EndpointConfig::loopback(port, 1)).unwrap();
    let s = rx.subscribe("blob/*", 4);
    let raw = UdpSocket::bind("127.0.0.1:0").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let payload: Vec<u8> = (0..1 << 20).map(|_| rng.random()).collect();
    let header = EnvelopeHeader { fingerprint: 5, sequence: 1, send_time_us: 0, channel: "blob/x".into() };
    let frags = encode_datagrams(&header, &payload, 1400, 77);
    let dup = frags.len() / 4;
    let mut order: Vec<&Vec<u8>> = frags.iter().chain(frags.iter().take(dup)).collect();
    order.shuffle(&mut rng);
    for (i, d) in order.iter().enumerate() {
        raw.send_to(d, ("127.0.0.1", port)).unwrap();
        if i % 32 == 0 {
            std::thread::sleep(Duration::from_millis(1));
        }
    }
    let blob_ok = s.recv(Duration::from_secs(5)).is_some_and(|e| e.payload[..] == payload[..]);
    let once = s.recv(Duration::from_millis(200)).is_none();
    (
        lost == 0 && out_of_order == 0 && blob_ok && once,
        format!(
            "10000 msgs: {lost} lost, {out_of_order} out of order; 1 MiB in {} fragments + {dup} duplicates shuffled: {}",
            frags.len(),
            if blob_ok && once { "intact, delivered once" } else { "BROKEN" }
        ),
    )
}

// ---- 3: services ----

fn services() -> Verdict {
    let (_reg, opts) = common::network();
    let prov = Node::create("prov", &opts).unwrap();
    let count = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&count);
    prov.advertise_service::<Pose2D, Pose2D, _>("double", move |p| {
        c.fetch_add(1, Ordering::SeqCst);
        Ok(Pose2D { x: p.x * 2.0, y: p.y, theta: p.theta })
    })
    .unwrap();
    let caller = Node::create("caller", &opts).unwrap();
    let dup = CallOptions { timeout: Duration::from_secs(5), duplicate_requests: 2 };
    let wrong = Arc::new(Mutex::new(0usize));
    for i in 0..1000 {
        let req = Pose2D { x: i as f64, y: -(i as f64), theta: 0.0 };
        match caller.call_service_with::<_, Pose2D>("prov/double", &req, dup) {
            Ok(r) if r.x == 2.0 * i as f64 && r.y == -(i as f64) => {}
            _ => *wrong.lock().unwrap() += 1,
        }
    }
    std::thread::scope(|s| {
        for i in 0..100 {
            let caller = caller.clone();
            let wrong = Arc::clone(&wrong);
            s.spawn(move || {
                let req = Pose2D { x: 1000.0 + i as f64, y: i as f64, theta: 0.0 };
                match caller.call_service_with::<_, Pose2D>("prov/double", &req, dup) {
                    Ok(r) if r.x == 2.0 * (1000.0 + i as f64) && r.y == i as f64 => {}
                    _ => *wrong.lock().unwrap() += 1,
                }
            });
        }
    });
    std::thread::sleep(Duration::from_millis(300));
    let wrong = *wrong.lock().unwrap();
    let calls = count.load(Ordering::SeqCst);
    (
        wrong == 0 && calls == 1100,
        format!("1100 calls with 2 extra copies of each request: {wrong} wrong replies, {calls} handler runs"),
    )
}

// ---- 4: log fidelity ----

fn log_fidelity() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let f = common::record_replay_rerecord(1500, dir.path());
    (
        f.recorded == 1500 && f.identical && f.median_timing_error_us <= 10_000,
        format!(
            "{} records, re-recording {}, median timing error {:.3} ms",
            f.recorded,
            if f.identical { "identical" } else { "DIFFERS" },
            f.median_timing_error_us as f64 / 1000.0
        ),
    )
}

// ---- 5: CSV export ----

fn csv_export() -> Verdict {
    let space = SpaceSpec::new([("robot/pose", "pose_2d_t"), ("teleop/twist", "twist_2d_t"), ("arm/joints", "joint_state_t")]);
    let catalog = SchemaCatalog::standard();
    let resolved = space.resolve(&catalog).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut differing = 0;
    let cases = 200;
    for case in 0..cases {
        let log = common::random_log(&mut rng);
        let rate = [1.0, 7.3, 10.0, 33.0, 100.0, 250.0][case % 6] * rng.random_range(0.9..1.1);
        for (mode, interp) in [(ResampleMode::Latest, false), (ResampleMode::Interp, true)] {
            let mut options = ExportOptions::new(rate, mode);
            options.allow_missing = vec!["arm/joints".into()];
            let mut out = Vec::new();
            export_csv(&log, &space, &catalog, &options, &mut out).unwrap();
            if String::from_utf8(out).unwrap() != common::brute_force_csv(&log, &resolved, rate, interp) {
                differing += 1;
            }
        }
    }
    (differing == 0, format!("{cases} random logs x 2 modes: {differing} exports differ from the brute-force resampler"))
}

// ---- 6: sim/real switch ----

fn sim_real() -> Verdict {
    let sim = common::sim_real_episode(true, 40);
    let real = common::sim_real_episode(false, 40);
    let same_channels = sim.channels == real.channels;
    let same_trace = sim.trace == real.trace;
    let payloads_differ = sim.pose_payloads != real.pose_payloads;
    (
        same_channels && same_trace && payloads_differ && sim.driver != real.driver,
        format!(
            "{} (channel, fingerprint) pairs {}; {} trace events {}; drivers {}/{}; pose payloads {}",
            sim.channels.len(),
            if same_channels { "identical" } else { "DIFFER" },
            sim.trace.len(),
            if same_trace { "identical" } else { "DIFFER" },
            sim.driver,
            real.driver,
            if payloads_differ { "differ" } else { "IDENTICAL" }
        ),
    )
}

// ---- 7: kinematics and lidar ----

fn lidar_world(rng: &mut ChaCha8Rng) -> WorldConfig<f64> {
    // Rectangles on cell boundaries, so the raster is exact.
    let rectangles = (0..rng.random_range(3..12))
        .map(|_| {
            let (cx, cy) = (rng.random_range(0..90), rng.random_range(0..90));
            let w = rng.random_range(1..15).min(100 - cx);
            let h = rng.random_range(1..15).min(100 - cy);
            Rect { x: cx as f64 * 0.1, y: cy as f64 * 0.1, w: w as f64 * 0.1, h: h as f64 * 0.1 }
        })
        .collect();
    WorldConfig {
        bounds: Bounds { width: 10.0, height: 10.0 },
        resolution: 0.1,
        rectangles,
        robot: RobotConfig { pose: Pose::new(0.0, 0.0, 0.0), r: 0.1, axle_track: 0.5, half_width: 0.01 },
        lidar: LidarConfig { n: 72, fov: std::f64::consts::TAU, range_max: 6.0, noise_std: 0.0 },
        seed: 0,
        dt: 0.02,
        wheel_noise_std: 0.0,
    }
}

fn kinematics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst_inverse: f64 = 0.0;
    for _ in 0..10_000 {
        let (radius, track): (f64, f64) = (rng.random_range(0.01..0.5), rng.random_range(0.05..1.0));
        let (l, r): (f64, f64) = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let w = inverse_kinematics(forward_kinematics(l, r, radius, track), radius, track).unwrap();
        worst_inverse = worst_inverse.max((w.left - l).abs() / (1.0 + l.abs())).max((w.right - r).abs() / (1.0 + r.abs()));
        let (v, om): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0));
        let s = inverse_kinematics(Twist::new(v, om), radius, track).unwrap();
        let t = forward_kinematics(s.left, s.right, radius, track);
        worst_inverse = worst_inverse.max((t.v - v).abs()).max((t.w - om).abs());
    }
    let h = std::f64::consts::FRAC_PI_2;
    let p = integrate_arc(Pose::new(0.0, 0.0, 0.0), Twist::new(h, h), 1.0);
    let arc_err = (p.x - 1.0).abs().max((p.y - 1.0).abs()).max((p.theta - h).abs());

    let half_diag = 0.1 * std::f64::consts::SQRT_2 / 2.0;
    let (mut poses, mut worst_beam): (usize, f64) = (0, 0.0);
    while poses < 1000 {
        let mut cfg = lidar_world(&mut rng);
        let boxes: Vec<[f64; 4]> = cfg.rectangles.iter().map(|r| [r.x, r.y, r.x + r.w, r.y + r.h]).collect();
        for _ in 0..50 {
            let pose = Pose::new(rng.random_range(0.05..9.95), rng.random_range(0.05..9.95), rng.random_range(-3.14..3.14));
            cfg.robot.pose = pose;
            let Ok(world) = World::new(cfg.clone()) else { continue };
            let scan = Simulator::new(world).scan();
            for (&a, &r) in scan.angles.iter().zip(&scan.ranges) {
                let want = ray_boxes(pose.x, pose.y, pose.theta + a, &boxes).map_or(6.0, |t| t.min(6.0));
                worst_beam = worst_beam.max((r - want).abs());
            }
            poses += 1;
        }
    }
    (
        worst_inverse <= 1e-12 && arc_err <= 1e-9 && worst_beam <= half_diag,
        format!(
            "inverse/forward worst {worst_inverse:.1e} (<= 1e-12); quarter arc {arc_err:.1e} (<= 1e-9); lidar worst {worst_beam:.4} m over {poses} poses (<= {half_diag:.4})"
        ),
    )
}

// ---- 8: EDT and A* ----

const N: usize = 64;

fn random_grid(rng: &mut ChaCha8Rng, density: f64) -> BoolGrid<f64> {
    let mut g = Grid::filled(GridGeometry::new(Point::new(0.0, 0.0), 0.1, N, N), false);
    for c in &mut g.cells {
        *c = rng.random_bool(density);
    }
    g
}

fn planning() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut edt_bad = 0;
    for k in 0..100 {
        let g = random_grid(&mut rng, [0.0, 0.002, 0.02, 0.1, 0.4][k % 5]);
        let fast = squared_distance_cells(&g);
        let slow = edt_brute(&g.cells, N, N);
        if fast.cells.iter().zip(&slow).any(|(&a, b)| a != b.unwrap_or(UNREACHED)) {
            edt_bad += 1;
        }
    }
    let (mut queries, mut found, mut cost_bad, mut exist_bad, mut clear_bad) = (0, 0, 0, 0, 0);
    for k in 0..100 {
        let g = random_grid(&mut rng, [0.05, 0.15, 0.3, 0.45][k % 4]);
        let clearance = [0.0, 0.1, 0.15, 0.2][k % 4];
        let t = Traversability::new(&g, clearance);
        let free: Vec<bool> = (0..N * N).map(|i| t.traversable(g.geometry.cell_of_index(i))).collect();
        let brute = edt_brute(&g.cells, N, N);
        let candidates: Vec<usize> = (0..N * N).filter(|&i| free[i]).collect();
        if candidates.len() < 2 {
            continue;
        }
        for _ in 0..5 {
            let (s, e) = (candidates[rng.random_range(0..candidates.len())], candidates[rng.random_range(0..candidates.len())]);
            let (sc, ec) = (g.geometry.cell_of_index(s), g.geometry.cell_of_index(e));
            let got = t.plan(g.geometry.center(sc), g.geometry.center(ec)).unwrap();
            queries += 1;
            if got.is_some() != bfs_reachable(&free, N, N, s, e) {
                exist_bad += 1;
            }
            match (got, dijkstra(&free, N, N, s, e)) {
                (Some(path), Some(want)) => {
                    found += 1;
                    if (path.cost.to_f64() - want).abs() > 1e-9 {
                        cost_bad += 1;
                    }
                    for c in &path.cells {
                        let i = g.geometry.index(*c).unwrap();
                        let d = brute[i].map_or(f64::INFINITY, |d2| (d2 as f64).sqrt() * 0.1);
                        if g.cells[i] || d < clearance {
                            clear_bad += 1;
                        }
                    }
                }
                (None, None) => {}
                _ => cost_bad += 1,
            }
        }
    }
    (
        edt_bad == 0 && cost_bad == 0 && exist_bad == 0 && clear_bad == 0,
        format!(
            "EDT: {edt_bad}/100 grids differ; A*: {queries} queries on 100 grids ({found} paths), {cost_bad} cost mismatches, {exist_bad} existence mismatches, {clear_bad} waypoints under clearance"
        ),
    )
}

// ---- 9 and 10: SLAM then navigation on the desk world ----

fn desk_run() -> Lockstep {
    let world = World::new(desk_world(42)).unwrap();
    let pose = world.config.robot.pose;
    Lockstep::new(world, desk_slam_config(42, pose), 5).unwrap()
}

fn slam(run: &mut Lockstep) -> Verdict {
    let script = loop_script(7.0, 0.25);
    let report = run_mapping(run, &script).unwrap();
    let again: MappingReport = run_mapping(&mut desk_run(), &script).unwrap();
    let deterministic = again == report;
    (
        report.position_error <= 0.3 && report.heading_error_deg <= 15.0 && report.agreement >= 0.85 && !report.collided && deterministic,
        format!(
            "{:.1} s simulated, M=50: pose error {:.3} m (<= 0.3), heading {:.2} deg (<= 15), map agreement {:.1}% over {} cells (>= 85%), rerun {}",
            report.sim_time,
            report.position_error,
            report.heading_error_deg,
            report.agreement * 100.0,
            report.observed_cells,
            if deterministic { "identical" } else { "DIFFERS" }
        ),
    )
}

fn navigation(run: &mut Lockstep) -> Verdict {
    let nav = NavConfig::default();
    let (pos_tol, floor) = (nav.gains.pos_tol, nav.clearance() - 0.1);
    let start = run.time();
    let r = run_navigation(run, nav, Point::new(8.5, 8.5), 120.0).unwrap();
    (
        r.reached && r.clearance_held && !r.collided,
        format!(
            "goal (8.5, 8.5) via {:.2} m plan: {} after {:.1} s, pose estimate {:.3} m from goal (pos_tol {pos_tol}), true pose {:.3} m; min true clearance {:.3} m (floor {floor:.2})",
            r.plan.cost,
            if r.reached { "reached" } else { "NOT reached" },
            r.sim_time - start,
            r.estimate_error,
            r.final_error,
            r.min_true_clearance
        ),
    )
}

// ---- 11: spy and graph ----

fn spy_graph() -> Verdict {
    let row = common::measure_spy(100.0, 4.0, 3.0);
    let (_reg, opts) = common::network();
    let sim = Node::create("sim", &opts).unwrap();
    let _p = sim.create_publisher::<Pose2D>("pose").unwrap();
    let _t = sim.create_publisher::<Twist2D>("twist").unwrap();
    sim.advertise_service::<Pose2D, Pose2D, _>("reset", Ok).unwrap();
    let slam = Node::create("slam", &opts).unwrap();
    let _s = slam.create_subscriber::<Pose2D>("sim/pose", 4).unwrap();
    let _m = slam.create_publisher::<Pose2D>("pose").unwrap();
    let logger = Node::create("logger", &opts).unwrap();
    let _l = logger.create_raw_subscriber(&["*"], 4).unwrap();
    let mut client = RegistryClient::connect(_reg.local_addr().to_string()).unwrap();
    let snaps: Vec<_> = (0..3).map(|_| client.snapshot().unwrap()).collect();
    let renders: HashSet<(String, String)> = snaps.iter().map(|s| Graph::from_snapshot(s)).map(|g| (g.to_json(), g.to_dot())).collect();
    let consistent = common::graph_matches_snapshot(&Graph::from_snapshot(&snaps[0]), &snaps[0]);
    let ok = (row.rate_hz - 100.0).abs() <= 2.0 && row.jitter_ms < 2.0 && renders.len() == 1 && consistent.is_ok();
    (
        ok,
        format!(
            "spy {:.2} Hz (100 +/- 2), jitter {:.3} ms (< 2); graph {} over 3 snapshots, registry check {}",
            row.rate_hz,
            row.jitter_ms,
            if renders.len() == 1 { "identical" } else { "VARIES" },
            consistent.map_or_else(|e| format!("FAILED: {e}"), |_| "ok".into())
        ),
    )
}

fn run(n: u32, title: &str, budget_s: f64, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let took = start.elapsed().as_secs_f64();
    let (ok, detail) = outcome.unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        (false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    let in_time = took <= budget_s;
    let pass = ok && in_time;
    println!(
        "{} {n:>2} {title}: {detail}; {took:.1} s{}",
        if pass { "PASS" } else { "FAIL" },
        if in_time { String::new() } else { format!(" (over the {budget_s} s budget)") }
    );
    pass
}

fn main() {
    let mut desk = desk_run();
    let results = [
        run(1, "codec", 60.0, codec),
        run(2, "transport", 30.0, transport),
        run(3, "services", 60.0, services),
        run(4, "log fidelity", 60.0, log_fidelity),
        run(5, "csv export", 30.0, csv_export),
        run(6, "sim/real switch", 60.0, sim_real),
        run(7, "kinematics and lidar", 30.0, kinematics),
        run(8, "distance transform and A*", 120.0, planning),
        run(9, "slam", 300.0, || slam(&mut desk)),
        run(10, "navigation", 120.0, || navigation(&mut desk)),
        run(11, "spy and graph", 60.0, spy_graph),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
