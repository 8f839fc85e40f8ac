#![allow(dead_code)]

use rand::Rng;
use robomesh_net::{EndpointConfig, NodeOptions, RegistryServer};

/// A private registry and multicast port, so tests do not hear each other.
pub fn network() -> (RegistryServer, NodeOptions) {
    let reg = RegistryServer::bind("127.0.0.1:0").unwrap();
    let port = rand::rng().random_range(20_000..60_000);
    let opts = NodeOptions::new(reg.local_addr().to_string(), EndpointConfig::multicast("239.255.76.67".parse().unwrap(), port));
    (reg, opts)
}
