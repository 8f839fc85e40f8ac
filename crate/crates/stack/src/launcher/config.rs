use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::Path;

use robomesh_net::EndpointConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_REGISTRY: &str = "127.0.0.1:7660";

/// Node kinds the `robomesh` binary can run itself.
pub const BUILTIN_KINDS: &[&str] = &["sim2d", "stub_hw", "slam", "nav", "teleop", "bridge", "env_demo", "logger"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartPolicy {
    #[default]
    Never,
    OnFailure,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    #[serde(default)]
    pub sim: Option<bool>,
    /// `internal`, `internal@host:port`, or `host:port` of a running registry.
    #[serde(default)]
    pub registry: Option<String>,
    #[serde(default)]
    pub udp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default)]
    pub kind: Option<String>,
    /// Program and leading arguments for an external node.
    #[serde(default)]
    pub command: Option<Vec<String>>,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub restart: RestartPolicy,
    /// Overrides the global flag for this node (warned).
    #[serde(default)]
    pub sim: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchConfig {
    #[serde(default)]
    pub global: GlobalConfig,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub path: String,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Report {
    pub findings: Vec<Finding>,
}

impl Report {
    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            path: path.into(),
            severity: Severity::Error,
            message: message.into(),
        });
    }

    fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            path: path.into(),
            severity: Severity::Warning,
            message: message.into(),
        });
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for x in &self.findings {
            let sev = match x.severity {
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            writeln!(f, "{sev}: {}: {}", x.path, x.message)?;
        }
        Ok(())
    }
}

/// Where the registry lives and whether the supervisor hosts it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrySetting {
    pub internal: bool,
    pub address: String,
}

pub fn parse_registry(s: &str) -> Result<RegistrySetting, String> {
    let (internal, addr) = match s.strip_prefix("internal") {
        Some("") => (true, DEFAULT_REGISTRY),
        Some(rest) => match rest.strip_prefix('@') {
            Some(a) => (true, a),
            None => (false, s),
        },
        None => (false, s),
    };
    addr.parse::<SocketAddr>().map_err(|e| format!("{addr:?} is not host:port ({e})"))?;
    Ok(RegistrySetting {
        internal,
        address: addr.to_string(),
    })
}

/// YAML syntax error with its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{l}:{c}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

impl LaunchConfig {
    pub fn parse(text: &str) -> Result<Self, SyntaxError> {
        serde_yaml::from_str(text).map_err(|e| SyntaxError {
            line: e.location().map(|l| l.line()),
            column: e.location().map(|l| l.column()),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, SyntaxError> {
        let text = std::fs::read_to_string(path).map_err(|e| SyntaxError {
            line: None,
            column: None,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text).map_err(|mut e| {
            e.message = format!("{}:{}", path.display(), e);
            e
        })
    }

    pub fn sim(&self) -> bool {
        self.global.sim.unwrap_or(true)
    }

    pub fn registry(&self) -> RegistrySetting {
        self.global
            .registry
            .as_deref()
            .and_then(|r| parse_registry(r).ok())
            .unwrap_or(RegistrySetting {
                internal: true,
                address: DEFAULT_REGISTRY.into(),
            })
    }

    /// Static checks only; nothing is spawned.
    pub fn validate(&self) -> Report {
        let mut r = Report::default();
        if self.global.sim.is_none() {
            r.warn("global.sim", "absent, defaults to true");
        }
        if let Some(reg) = &self.global.registry {
            if let Err(e) = parse_registry(reg) {
                r.error("global.registry", e);
            }
        }
        if let Some(udp) = &self.global.udp {
            if let Err(e) = udp.parse::<EndpointConfig>() {
                r.error("global.udp", e.to_string());
            }
        }
        if self.nodes.is_empty() {
            r.warn("nodes", "no nodes configured");
        }
        let mut seen = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let at = |f: &str| format!("nodes[{i}].{f}");
            if n.name.is_empty() || n.name.contains('/') || n.name.starts_with("__") || n.name.contains(char::is_whitespace) {
                r.error(at("name"), format!("invalid node name {:?}", n.name));
            }
            if !seen.insert(n.name.as_str()) {
                r.error(at("name"), format!("duplicate node name {:?}", n.name));
            }
            match (&n.kind, &n.command) {
                (Some(_), Some(_)) => r.error(at("kind"), "set either kind or command, not both"),
                (None, None) => r.error(at("kind"), "one of kind or command is required"),
                (Some(k), None) if !BUILTIN_KINDS.contains(&k.as_str()) => {
                    r.error(at("kind"), format!("unknown builtin kind {k:?} (known: {})", BUILTIN_KINDS.join(", ")))
                }
                (None, Some(c)) if c.is_empty() => r.error(at("command"), "empty command"),
                _ => {}
            }
            if n.sim.is_some() && n.sim != self.global.sim {
                r.warn(at("sim"), "overrides the global sim flag");
            }
            for k in n.env.keys() {
                if k.is_empty() || k.contains('=') {
                    r.error(at("env"), format!("invalid variable name {k:?}"));
                }
            }
        }
        r
    }
}
