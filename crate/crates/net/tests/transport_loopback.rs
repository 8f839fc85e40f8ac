use std::net::UdpSocket;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robomesh_net::transport::packet::{encode_datagrams, EnvelopeHeader};
use robomesh_net::{Endpoint, EndpointConfig, Mode, TransportError};

fn free_port() -> u16 {
    // Ports in a band unlikely to be used by other tests in this binary.
    rand::rng().random_range(20_000..60_000)
}

fn multicast() -> EndpointConfig {
    EndpointConfig::multicast("239.255.76.67".parse().unwrap(), free_port())
}

fn pair(cfg: EndpointConfig) -> (Endpoint, Endpoint) {
    let a = Endpoint::open(cfg.clone()).unwrap();
    let b = Endpoint::open(cfg).unwrap();
    (a, b)
}

const WAIT: Duration = Duration::from_secs(2);

#[test]
fn two_endpoints_on_one_group_see_each_other() {
    let (a, b) = pair(multicast());
    let sa = a.subscribe("t/*", 16);
    let sb = b.subscribe("t/*", 16);
    a.publish("t/from_a", 1, b"hello").unwrap();
    b.publish("t/from_b", 2, b"world").unwrap();
    let mut got_a: Vec<_> = (0..2).filter_map(|_| sa.recv(WAIT)).map(|e| e.channel).collect();
    let mut got_b: Vec<_> = (0..2).filter_map(|_| sb.recv(WAIT)).map(|e| e.channel).collect();
    got_a.sort();
    got_b.sort();
    assert_eq!(got_a, ["t/from_a", "t/from_b"]);
    assert_eq!(got_b, ["t/from_a", "t/from_b"]);
    // Own publications arrive once, not again through the socket.
    assert!(sa.recv(Duration::from_millis(100)).is_none());
}

#[test]
fn loopback_port_list_mode() {
    let cfg = EndpointConfig::loopback(free_port(), 4);
    let (a, b) = pair(cfg);
    assert_ne!(a.local_addr(), b.local_addr());
    let sb = b.subscribe("x/y", 8);
    a.publish("x/y", 7, &[1, 2, 3]).unwrap();
    let e = sb.recv(WAIT).unwrap();
    assert_eq!((e.channel.as_str(), e.fingerprint, &e.payload[..]), ("x/y", 7, &[1u8, 2, 3][..]));
}

#[test]
fn exclusive_port_cannot_be_opened_twice() {
    let cfg = EndpointConfig::loopback(free_port(), 1);
    let _a = Endpoint::open(cfg.clone()).unwrap();
    assert!(matches!(Endpoint::open(cfg), Err(TransportError::Bind(_))));
}

#[test]
fn ephemeral_loopback_endpoint_is_usable() {
    let e = Endpoint::open(multicast()).unwrap();
    assert!(matches!(e.mode(), Mode::Multicast { .. } | Mode::Loopback { .. }));
    let s = e.subscribe_default("me/x");
    assert_eq!(s.capacity(), 64);
    e.publish("me/x", 1, &[]).unwrap();
    assert_eq!(s.recv(WAIT).unwrap().sequence, 1);
}

#[test]
fn empty_queue_times_out() {
    let e = Endpoint::open(multicast()).unwrap();
    let s = e.subscribe("nothing/here", 4);
    let t = Instant::now();
    assert!(s.recv(Duration::from_millis(10)).is_none());
    assert!(t.elapsed() >= Duration::from_millis(10));
}

#[test]
fn sequence_order_is_preserved() {
    let (a, b) = pair(multicast());
    let s = b.subscribe("seq/c", 128);
    for i in 0..100u32 {
        a.publish("seq/c", 9, &i.to_be_bytes()).unwrap();
    }
    let seqs: Vec<u64> = (0..100).map(|_| s.recv(WAIT).expect("message").sequence).collect();
    assert_eq!(seqs, (1..=100).collect::<Vec<_>>());
}

#[test]
fn full_queue_drops_oldest() {
    let e = Endpoint::open(multicast()).unwrap();
    let s = e.subscribe("q/c", 64);
    for i in 0..65u8 {
        e.publish("q/c", 1, &[i]).unwrap();
    }
    assert_eq!(s.drop_count(), 1);
    assert_eq!(s.len(), 64);
    assert_eq!(s.try_recv().unwrap().payload[0], 1);
}

#[test]
fn filters_route_by_channel() {
    let e = Endpoint::open(multicast()).unwrap();
    let sim = e.subscribe("simnode/*", 8);
    let exact = e.subscribe("slam/pose", 8);
    e.publish("simnode/scan", 1, &[]).unwrap();
    e.publish("slam/pose", 1, &[]).unwrap();
    e.publish("slam/map", 1, &[]).unwrap();
    assert_eq!(sim.drain().len(), 1);
    assert_eq!(exact.drain().iter().map(|e| e.channel.as_str()).collect::<Vec<_>>(), ["slam/pose"]);
}

#[test]
fn oversize_inputs_are_rejected() {
    let e = Endpoint::open(multicast()).unwrap();
    let long = "a".repeat(256);
    assert!(matches!(e.publish(&long, 0, &[]), Err(TransportError::ChannelTooLong(256))));
    let big = vec![0u8; (64 << 20) + 1];
    assert!(matches!(e.publish("a/b", 0, &big), Err(TransportError::PayloadTooLarge(_))));
}

#[test]
fn one_mebibyte_crosses_endpoints() {
    let (a, b) = pair(multicast());
    let s = b.subscribe("big/blob", 4);
    let payload: Vec<u8> = (0..1u32 << 20).map(|i| (i * 31 % 251) as u8).collect();
    a.publish("big/blob", 5, &payload).unwrap();
    let e = s.recv(Duration::from_secs(5)).expect("reassembled");
    assert_eq!(&e.payload[..], &payload[..]);
}

#[test]
fn injected_fragments_in_random_order_with_duplicates() {
    let port = free_port();
    let rx = Endpoint::open(EndpointConfig::loopback(port, 1)).unwrap();
    let s = rx.subscribe("inj/*", 16);
    let raw = UdpSocket::bind("127.0.0.1:0").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for round in 0..3u64 {
        let payload: Vec<u8> = (0..200_000).map(|_| rng.random()).collect();
        let header = EnvelopeHeader { fingerprint: 11, sequence: round + 1, send_time_us: 0, channel: "inj/x".into() };
        let frags = encode_datagrams(&header, &payload, 1400, 1000 + round);
        let mut order: Vec<&Vec<u8>> = frags.iter().chain(frags.iter().take(20)).collect();
        order.shuffle(&mut rng);
        for (i, d) in order.iter().enumerate() {
            raw.send_to(d, ("127.0.0.1", port)).unwrap();
            if i % 32 == 0 {
                std::thread::sleep(Duration::from_millis(1));
            }
        }
        let e = s.recv(WAIT).expect("one envelope");
        assert_eq!(e.sequence, round + 1);
        assert_eq!(&e.payload[..], &payload[..]);
        assert!(s.recv(Duration::from_millis(100)).is_none(), "delivered twice");
    }
    // Incomplete set: nothing delivered.
    let header = EnvelopeHeader { fingerprint: 11, sequence: 9, send_time_us: 0, channel: "inj/x".into() };
    let frags = encode_datagrams(&header, &[0u8; 10_000], 1400, 5000);
    for d in &frags[1..] {
        raw.send_to(d, ("127.0.0.1", port)).unwrap();
    }
    assert!(s.recv(Duration::from_millis(300)).is_none());
}

#[test]
fn ten_thousand_messages_lossless_and_ordered() {
    let (a, b) = pair(multicast());
    let channels = ["load/a", "load/b", "load/c", "load/d"];
    let s = b.subscribe("load/*", 10_000);
    for i in 0..10_000u32 {
        a.publish(channels[i as usize % 4], 3, &i.to_be_bytes()).unwrap();
    }
    let mut last = [0u64; 4];
    let mut n = 0;
    while let Some(e) = s.recv(WAIT) {
        let k = channels.iter().position(|c| *c == e.channel).unwrap();
        assert_eq!(e.sequence, last[k] + 1, "{} out of order", e.channel);
        last[k] = e.sequence;
        n += 1;
        if n == 10_000 {
            break;
        }
    }
    assert_eq!(n, 10_000);
    assert_eq!(s.drop_count(), 0);
}
