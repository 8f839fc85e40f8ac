use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use robomesh_msg::types::{EpisodeMarker, ResetReply, ResetRequest, Time};
use robomesh_msg::{Message, SchemaCatalog, Value};
use robomesh_net::transport::now_us;
use robomesh_net::{Node, NodeOptions, RawPublisher, RuntimeError, ServiceError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::driver::{Driver, DriverConfig, DriverError, DriverKind};
use super::space::SpaceSpec;

fn default_name() -> String {
    "env".into()
}

fn default_reset_timeout() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Absent means simulation, with a warning.
    #[serde(default)]
    pub sim: Option<bool>,
    pub step_rate_hz: f64,
    pub horizon: u64,
    pub observation_space: SpaceSpec,
    pub action_space: SpaceSpec,
    /// `<node>/<service>` answering `reset_req_t` with `reset_rep_t`.
    pub reset_service: String,
    #[serde(default = "default_reset_timeout")]
    pub reset_timeout_s: f64,
}

impl EnvConfig {
    pub fn from_yaml(text: &str) -> Result<Self, EnvError> {
        serde_yaml::from_str(text).map_err(|e| EnvError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| EnvError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_yaml(&text)
    }

    pub fn sim(&self) -> bool {
        self.sim.unwrap_or(true)
    }

    pub fn validate(&self, catalog: &SchemaCatalog) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.step_rate_hz > 0.0 && self.step_rate_hz.is_finite()) {
            return bad(format!("step_rate_hz must be positive, got {}", self.step_rate_hz));
        }
        if !(self.reset_timeout_s > 0.0) {
            return bad("reset_timeout_s must be positive".into());
        }
        if self.observation_space.is_empty() {
            return bad("observation_space is empty".into());
        }
        if !matches!(self.reset_service.split_once('/'), Some((n, s)) if !n.is_empty() && !s.is_empty()) {
            return bad(format!("reset_service must be <node>/<service>, got {:?}", self.reset_service));
        }
        for c in self.observation_space.channels() {
            if self.action_space.0.contains_key(c) {
                return bad(format!("{c} is in both spaces"));
            }
        }
        self.observation_space.resolve(catalog)?;
        self.action_space.resolve(catalog)?;
        Ok(())
    }

    /// Component owning the reset service, whose channels the driver binds.
    pub fn component(&self) -> &str {
        self.reset_service.split_once('/').map_or("", |(n, _)| n)
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("env config: {0}")]
    Config(String),
    #[error(transparent)]
    Space(#[from] super::space::SpaceError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("reset service {0} is not advertised")]
    MissingResetService(String),
    #[error("reset call failed: {0}")]
    ResetCall(#[from] ServiceError),
    #[error("reset: no post-reset message within {timeout_s} s on {}", missing.join(", "))]
    ResetIncomplete { missing: Vec<String>, timeout_s: f64 },
    #[error("action channels do not match the action space (missing: {missing:?}, unexpected: {unexpected:?})")]
    ActionMismatch { missing: Vec<String>, unexpected: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsEntry {
    pub value: Value,
    pub recv_time_us: u64,
}

/// Latest message per observation channel; `None` until one arrives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observation {
    pub entries: IndexMap<String, Option<ObsEntry>>,
}

impl Observation {
    pub fn get(&self, channel: &str) -> Option<&ObsEntry> {
        self.entries.get(channel)?.as_ref()
    }

    pub fn decode<M: Message>(&self, channel: &str) -> Option<M> {
        M::from_value(&self.get(channel)?.value).ok()
    }

    pub fn missing(&self) -> Vec<String> {
        self.entries.iter().filter(|(_, v)| v.is_none()).map(|(k, _)| k.clone()).collect()
    }
}

pub type Action = BTreeMap<String, Value>;
pub type Info = BTreeMap<String, serde_json::Value>;

pub fn action<M: Message>(pairs: &[(&str, M)]) -> Action {
    pairs.iter().map(|(c, m)| (c.to_string(), m.to_value())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: Info,
}

pub type RewardHook = Box<dyn FnMut(&Observation) -> f64 + Send>;
pub type TerminationHook = Box<dyn FnMut(&Observation) -> bool + Send>;

/// Ordered labels of the env-layer operations performed.
#[derive(Debug, Clone, Default)]
pub struct Trace(Arc<Mutex<Vec<String>>>);

impl Trace {
    pub fn events(&self) -> Vec<String> {
        self.0.lock().unwrap().clone()
    }

    fn push(&self, label: String) {
        self.0.lock().unwrap().push(label);
    }
}

/// A Gym-style environment over live channels.
pub struct Environment {
    config: EnvConfig,
    node: Node,
    driver: Driver,
    observation: Observation,
    episode_pub: RawPublisher,
    episode_id: Option<i64>,
    steps: u64,
    next_deadline: Option<Instant>,
    reward_hook: RewardHook,
    termination_hook: TerminationHook,
    trace: Option<Trace>,
}

/// How long construction waits for the reset service to appear.
pub const SERVICE_WAIT: Duration = Duration::from_secs(2);

/// Builds an environment on a new node named after the env.
pub fn make_env(config: EnvConfig, options: &NodeOptions) -> Result<Environment, EnvError> {
    let node = Node::create(&config.name, options)?;
    Environment::with_node(node, config, SERVICE_WAIT)
}

impl Environment {
    pub fn with_node(node: Node, config: EnvConfig, service_wait: Duration) -> Result<Self, EnvError> {
        let catalog = SchemaCatalog::standard();
        config.validate(&catalog)?;
        if config.sim.is_none() {
            log::warn!("env {}: sim flag absent, defaulting to true", config.name);
        }
        let deadline = Instant::now() + service_wait;
        loop {
            let found = node.with_registry(|c| c.lookup_service(&config.reset_service)).map_err(RuntimeError::from)?;
            if found.is_some() {
                break;
            }
            if Instant::now() >= deadline {
                return Err(EnvError::MissingResetService(config.reset_service.clone()));
            }
            std::thread::sleep(Duration::from_millis(50));
        }
        let driver = Driver::bind(
            &node,
            DriverConfig {
                component: config.component().to_string(),
                sim: config.sim(),
                sensors: config.observation_space.clone(),
                commands: config.action_space.clone(),
            },
            &catalog,
        )?;
        let episode_pub = node.create_raw_publisher(&format!("__episode/{}", config.name), EpisodeMarker::fingerprint())?;
        let observation = Observation {
            entries: config.observation_space.channels().map(|c| (c.to_string(), None)).collect(),
        };
        Ok(Self {
            config,
            node,
            driver,
            observation,
            episode_pub,
            episode_id: None,
            steps: 0,
            next_deadline: None,
            reward_hook: Box::new(|_| 0.0),
            termination_hook: Box::new(|_| false),
            trace: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn driver_kind(&self) -> DriverKind {
        self.driver.kind()
    }

    pub fn episode_id(&self) -> Option<i64> {
        self.episode_id
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn set_reward_hook(&mut self, hook: RewardHook) {
        self.reward_hook = hook;
    }

    pub fn set_termination_hook(&mut self, hook: TerminationHook) {
        self.termination_hook = hook;
    }

    /// Starts recording operation labels.
    pub fn enable_trace(&mut self) -> Trace {
        self.trace.get_or_insert_with(Trace::default).clone()
    }

    fn mark(&self, label: impl FnOnce() -> String) {
        if let Some(t) = &self.trace {
            t.push(label());
        }
    }

    /// Folds pending readings into the observation; returns channels that
    /// produced a message sent at or after `since_us`.
    fn absorb(&mut self, since_us: u64) -> Vec<String> {
        let mut fresh = Vec::new();
        for r in self.driver.get_data() {
            let Some(slot) = self.observation.entries.get_mut(&r.channel) else {
                continue;
            };
            if slot.as_ref().is_some_and(|e| e.recv_time_us > r.recv_time_us) {
                continue;
            }
            if r.send_time_us >= since_us {
                fresh.push(r.channel.clone());
            }
            *slot = Some(ObsEntry {
                value: r.value,
                recv_time_us: r.recv_time_us,
            });
        }
        fresh
    }

    fn info(&self) -> Info {
        let mut info = Info::new();
        info.insert("episode_id".into(), self.episode_id.into());
        info.insert("step".into(), self.steps.into());
        info.insert("driver".into(), self.driver.kind().node_kind().into());
        info
    }

    pub fn reset(&mut self) -> Result<(Observation, Info), EnvError> {
        self.reset_to(None)
    }

    /// Resets the provider (optionally to `pose`) and waits for a
    /// post-reset message on every observation channel.
    pub fn reset_to(&mut self, pose: Option<robomesh_msg::types::Pose2D>) -> Result<(Observation, Info), EnvError> {
        let timeout = Duration::from_secs_f64(self.config.reset_timeout_s);
        self.mark(|| "reset.call".into());
        let request = ResetRequest {
            has_pose: pose.is_some(),
            pose: pose.unwrap_or_default(),
        };
        let reply: ResetReply = self.node.call_service(&self.config.reset_service, &request, timeout)?;
        let since = now_us();
        for slot in self.observation.entries.values_mut() {
            *slot = None;
        }
        self.mark(|| "reset.wait".into());
        let deadline = Instant::now() + timeout;
        let mut pending: Vec<String> = self.observation.entries.keys().cloned().collect();
        while !pending.is_empty() {
            for c in self.absorb(since) {
                pending.retain(|p| *p != c);
            }
            if pending.is_empty() {
                break;
            }
            if Instant::now() >= deadline {
                return Err(EnvError::ResetIncomplete {
                    missing: pending,
                    timeout_s: self.config.reset_timeout_s,
                });
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        self.episode_id = Some(reply.episode_id);
        self.steps = 0;
        self.next_deadline = None;
        self.mark(|| "reset.marker".into());
        let marker = EpisodeMarker {
            env: self.config.name.clone(),
            episode_id: reply.episode_id,
            stamp: Time::now(),
        };
        self.episode_pub.publish(&marker.encode().map_err(RuntimeError::from)?)?;
        Ok((self.observation.clone(), self.info()))
    }

    /// Publishes `action` (all channels or none), waits out the step period
    /// and returns the latest observation.
    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        self.mark(|| "step.validate".into());
        let expected: Vec<&String> = self.config.action_space.0.keys().collect();
        let missing: Vec<String> = expected.iter().filter(|c| !action.contains_key(c.as_str())).map(|c| c.to_string()).collect();
        let unexpected: Vec<String> = action.keys().filter(|c| !self.config.action_space.0.contains_key(*c)).cloned().collect();
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(EnvError::ActionMismatch { missing, unexpected });
        }
        let mut payloads = Vec::with_capacity(action.len());
        for c in &expected {
            payloads.push((c.as_str(), self.driver.prepare_command(c, &action[c.as_str()])?));
        }
        for (c, p) in &payloads {
            self.mark(|| format!("step.publish {c}"));
            self.driver.send_prepared(c, p)?;
        }
        self.mark(|| "step.sleep".into());
        let period = Duration::from_secs_f64(1.0 / self.config.step_rate_hz);
        let now = Instant::now();
        let due = *self.next_deadline.get_or_insert(now + period);
        if due > now {
            std::thread::sleep(due - now);
        }
        let next = due + period;
        self.next_deadline = Some(if next < Instant::now() { Instant::now() + period } else { next });
        self.mark(|| "step.observe".into());
        self.absorb(0);
        self.steps += 1;
        let reward = (self.reward_hook)(&self.observation);
        let terminated = (self.termination_hook)(&self.observation);
        let truncated = !terminated && self.steps >= self.config.horizon;
        Ok(StepResult {
            observation: self.observation.clone(),
            reward,
            terminated,
            truncated,
            info: self.info(),
        })
    }
}
