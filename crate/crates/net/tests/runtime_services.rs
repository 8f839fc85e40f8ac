mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use robomesh_msg::types::{Pose2D, Twist2D};
use robomesh_msg::Message;
use robomesh_net::runtime::ServiceError;
use robomesh_net::{CallOptions, Flow, Node, RuntimeError};

const WAIT: Duration = Duration::from_secs(2);

#[test]
fn nodes_are_listed_and_names_unique() {
    let (reg, opts) = common::network();
    let _sim = Node::create("sim", &opts).unwrap();
    let _slam = Node::create("slam", &opts).unwrap();
    assert!(Node::create("sim", &opts).is_err());
    assert!(Node::create("a/b", &opts).is_err());
    let names: Vec<String> = reg.handle(robomesh_net::registry::Request::ListNodes).nodes.unwrap().into_iter().map(|n| n.name).collect();
    assert_eq!(names, ["sim", "slam"]);
}

#[test]
fn publisher_channel_law() {
    let (_reg, opts) = common::network();
    let sim = Node::create("sim", &opts).unwrap();
    let p = sim.create_publisher::<Pose2D>("scan").unwrap();
    assert_eq!(p.channel(), "sim/scan");
    assert!(matches!(sim.create_publisher::<Pose2D>("a/b"), Err(RuntimeError::InvalidName(..))));
    assert!(matches!(sim.create_publisher::<Pose2D>(""), Err(RuntimeError::InvalidName(..))));
    assert!(matches!(sim.create_publisher::<Twist2D>("scan"), Err(RuntimeError::DuplicatePublisher(_))));
    let rec = sim.record();
    assert_eq!(rec.publishers[0].fingerprint, Pose2D::fingerprint());
}

#[test]
fn typed_delivery_and_fingerprint_gate() {
    let (_reg, opts) = common::network();
    let a = Node::create("a", &opts).unwrap();
    let b = Node::create("b", &opts).unwrap();
    let good = b.create_subscriber::<Pose2D>("a/pose", 16).unwrap();
    let wrong = b.create_subscriber::<Twist2D>("a/pose", 16).unwrap();
    assert!(good.latest().is_none());
    let p = a.create_publisher::<Pose2D>("pose").unwrap();
    let v = Pose2D { x: 1.0, y: 2.0, theta: 0.5 };
    p.publish(&v).unwrap();
    let s = good.recv(WAIT).unwrap();
    assert_eq!(s.value, v);
    assert_eq!(s.channel, "a/pose");
    p.publish(&Pose2D { x: 3.0, ..v }).unwrap();
    std::thread::sleep(Duration::from_millis(100));
    assert_eq!(good.latest().unwrap().x, 3.0);
    assert!(wrong.recv(Duration::from_millis(100)).is_none());
    assert!(wrong.latest().is_none());
    assert_eq!(wrong.mismatch_count(), 2);
}

fn echo(node: &Node) {
    node.advertise_service::<Pose2D, Pose2D, _>("echo", Ok).unwrap();
}

#[test]
fn echo_error_panic_and_missing() {
    let (_reg, opts) = common::network();
    let prov = Node::create("prov", &opts).unwrap();
    echo(&prov);
    assert!(matches!(
        prov.advertise_service::<Pose2D, Pose2D, _>("echo", Ok),
        Err(RuntimeError::DuplicateService(_))
    ));
    prov.advertise_service::<Pose2D, Pose2D, _>("fail", |_| Err("no thanks".into())).unwrap();
    prov.advertise_service::<Pose2D, Pose2D, _>("explode", |_| panic!("kaboom")).unwrap();
    let caller = Node::create("caller", &opts).unwrap();
    let req = Pose2D { x: 4.0, y: -1.0, theta: 3.0 };
    let rep: Pose2D = caller.call_service("prov/echo", &req, WAIT).unwrap();
    assert_eq!(rep, req);
    let e = caller.call_service::<_, Pose2D>("prov/fail", &req, WAIT).unwrap_err();
    assert!(matches!(&e, ServiceError::Remote(m) if m == "no thanks"), "{e}");
    let t = Instant::now();
    let e = caller.call_service::<_, Pose2D>("prov/explode", &req, WAIT).unwrap_err();
    assert!(matches!(&e, ServiceError::Remote(m) if m.contains("kaboom")), "{e}");
    assert!(t.elapsed() < WAIT);
    let e = caller.call_service::<_, Pose2D>("prov/nothing", &req, Duration::from_millis(300)).unwrap_err();
    assert!(e.is_timeout());
    let e = caller.call_service::<_, Twist2D>("prov/echo", &req, WAIT).unwrap_err();
    assert!(matches!(e, ServiceError::SchemaMismatch { .. }));
    assert!(matches!(caller.call_service::<_, Pose2D>("noslash", &req, WAIT), Err(ServiceError::BadTarget(_))));
}

fn counting_provider(node: &Node) -> Arc<AtomicUsize> {
    let count = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&count);
    node.advertise_service::<Pose2D, Pose2D, _>("double", move |p| {
        c.fetch_add(1, Ordering::SeqCst);
        Ok(Pose2D { x: p.x * 2.0, y: p.y, theta: p.theta })
    })
    .unwrap();
    count
}

#[test]
fn sequential_calls_with_duplicated_requests() {
    let (_reg, opts) = common::network();
    let prov = Node::create("prov", &opts).unwrap();
    let count = counting_provider(&prov);
    let caller = Node::create("caller", &opts).unwrap();
    let opts = CallOptions { timeout: WAIT, duplicate_requests: 2 };
    for i in 0..300 {
        let rep: Pose2D = caller.call_service_with("prov/double", &Pose2D { x: i as f64, y: 0.0, theta: 0.0 }, opts).unwrap();
        assert_eq!(rep.x, 2.0 * i as f64);
    }
    std::thread::sleep(Duration::from_millis(200));
    assert_eq!(count.load(Ordering::SeqCst), 300);
}

#[test]
fn concurrent_callers_get_their_own_replies() {
    let (_reg, opts) = common::network();
    let prov = Node::create("prov", &opts).unwrap();
    let count = counting_provider(&prov);
    let caller = Node::create("caller", &opts).unwrap();
    let errors = Arc::new(Mutex::new(Vec::new()));
    std::thread::scope(|s| {
        for i in 0..50 {
            let caller = caller.clone();
            let errors = Arc::clone(&errors);
            s.spawn(move || {
                let req = Pose2D { x: i as f64, y: i as f64, theta: 0.0 };
                match caller.call_service::<_, Pose2D>("prov/double", &req, Duration::from_secs(5)) {
                    Ok(r) if r.x == 2.0 * i as f64 && r.y == i as f64 => {}
                    other => errors.lock().unwrap().push(format!("{i}: {other:?}")),
                }
            });
        }
    });
    assert!(errors.lock().unwrap().is_empty(), "{:?}", errors.lock().unwrap());
    assert_eq!(count.load(Ordering::SeqCst), 50);
}

#[test]
fn closing_a_node_removes_it_from_the_registry() {
    let (reg, opts) = common::network();
    let n = Node::create("brief", &opts).unwrap();
    let list = || reg.handle(robomesh_net::registry::Request::ListNodes).nodes.unwrap().len();
    assert_eq!(list(), 1);
    let e = n.spin(200.0, |_| Err("step failed".into())).unwrap_err();
    assert!(matches!(e, RuntimeError::Callback(_)));
    assert_eq!(list(), 0);
    let n = Node::create("brief", &opts).unwrap();
    let token = n.shutdown_token();
    let mut k = 0;
    n.spin(200.0, |_| {
        k += 1;
        if k == 5 {
            token.trigger();
        }
        Ok(Flow::Continue)
    })
    .unwrap();
    assert_eq!(k, 5);
    drop(n);
    assert_eq!(list(), 0);
}
