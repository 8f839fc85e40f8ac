use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use robomesh_net::transport::ChannelFilter;
use robomesh_net::Snapshot;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Publish,
    Subscribe,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelVertex {
    pub name: String,
    /// Fingerprints declared by publishers, hex.
    pub fingerprints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeVertex {
    pub name: String,
    pub services: Vec<String>,
}

/// Bipartite topology: node -> channel for publishing, channel -> node for
/// subscribing. Everything is sorted, so equal networks render equally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub v: u32,
    pub nodes: Vec<NodeVertex>,
    pub channels: Vec<ChannelVertex>,
    pub edges: Vec<Edge>,
}

fn reserved(channel: &str) -> bool {
    channel.starts_with("__srv/")
}

impl Graph {
    /// Service plumbing channels are left out; services are listed per node.
    /// A wildcard subscription links every published channel it matches, or
    /// stands as its own vertex when it matches none.
    pub fn from_snapshot(snapshot: &Snapshot) -> Self {
        let mut channels: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
        let mut edges = BTreeSet::new();
        let mut nodes = Vec::new();
        for n in &snapshot.nodes {
            for p in n.publishers.iter().filter(|p| !reserved(&p.channel)) {
                channels.entry(p.channel.clone()).or_default().insert(p.fingerprint);
                edges.insert(Edge {
                    from: n.name.clone(),
                    to: p.channel.clone(),
                    kind: EdgeKind::Publish,
                });
            }
            let mut services: Vec<String> = n.services.iter().filter(|s| !s.is_default).map(|s| s.name.clone()).collect();
            services.sort();
            nodes.push(NodeVertex {
                name: n.name.clone(),
                services,
            });
        }
        let published: Vec<String> = channels.keys().cloned().collect();
        for n in &snapshot.nodes {
            for f in n.subscribers.iter().filter(|f| !reserved(f)) {
                let targets: Vec<String> = match ChannelFilter::parse(f) {
                    ChannelFilter::Exact(c) => vec![c],
                    filter => {
                        let hits: Vec<String> = published.iter().filter(|c| filter.matches(c)).cloned().collect();
                        if hits.is_empty() {
                            vec![f.clone()]
                        } else {
                            hits
                        }
                    }
                };
                for c in targets {
                    channels.entry(c.clone()).or_default();
                    edges.insert(Edge {
                        from: c,
                        to: n.name.clone(),
                        kind: EdgeKind::Subscribe,
                    });
                }
            }
        }
        nodes.sort_by(|a, b| a.name.cmp(&b.name));
        Self {
            v: 1,
            nodes,
            channels: channels
                .into_iter()
                .map(|(name, fps)| ChannelVertex {
                    name,
                    fingerprints: fps.into_iter().map(|f| format!("{f:016x}")).collect(),
                })
                .collect(),
            edges: edges.into_iter().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn to_dot(&self) -> String {
        let q = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
        let mut out = String::from("digraph robomesh {\n  rankdir=LR;\n");
        for n in &self.nodes {
            let label = if n.services.is_empty() {
                n.name.clone()
            } else {
                format!("{}\\n[{}]", n.name, n.services.join(", "))
            };
            let _ = writeln!(out, "  {} [shape=box, label=\"{}\"];", q(&format!("node:{}", n.name)), label.replace('"', "\\\""));
        }
        for c in &self.channels {
            let _ = writeln!(out, "  {} [shape=ellipse, label={}];", q(&format!("chan:{}", c.name)), q(&c.name));
        }
        for e in &self.edges {
            let (from, to) = match e.kind {
                EdgeKind::Publish => (format!("node:{}", e.from), format!("chan:{}", e.to)),
                EdgeKind::Subscribe => (format!("chan:{}", e.from), format!("node:{}", e.to)),
            };
            let _ = writeln!(out, "  {} -> {};", q(&from), q(&to));
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use robomesh_net::registry::hex_u64;
    use robomesh_net::registry::PublisherInfo;
    use robomesh_net::NodeRecord;

    fn snap(nodes: Vec<NodeRecord>) -> Snapshot {
        Snapshot {
            v: 1,
            time_us: 0,
            nodes,
            default_services: Vec::new(),
        }
    }

    #[test]
    fn empty_network() {
        let g = Graph::from_snapshot(&snap(vec![]));
        assert!(g.nodes.is_empty() && g.channels.is_empty() && g.edges.is_empty());
        assert_eq!(g.to_dot(), "digraph robomesh {\n  rankdir=LR;\n}\n");
    }

    #[test]
    fn wildcard_links_matching_channels() {
        let mut sim = NodeRecord::new("sim");
        sim.publishers.push(PublisherInfo { channel: "sim/scan".into(), fingerprint: 1 });
        sim.publishers.push(PublisherInfo { channel: "sim/pose".into(), fingerprint: 2 });
        let mut logger = NodeRecord::new("logger");
        logger.subscribers.push("sim/*".into());
        logger.subscribers.push("other/*".into());
        let g = Graph::from_snapshot(&snap(vec![sim, logger]));
        let subs: Vec<_> = g.edges.iter().filter(|e| e.kind == EdgeKind::Subscribe).map(|e| e.from.as_str()).collect();
        assert_eq!(subs, ["other/*", "sim/pose", "sim/scan"]);
    }

    #[test]
    fn fingerprint_text_matches_registry_encoding() {
        #[derive(Serialize)]
        struct W(#[serde(with = "hex_u64")] u64);
        let v = 0xdead_beef_u64;
        assert_eq!(serde_json::to_string(&W(v)).unwrap(), format!("\"{v:016x}\""));
    }
}
