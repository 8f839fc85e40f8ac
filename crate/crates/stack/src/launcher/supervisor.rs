use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::PathBuf;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use robomesh_net::registry::ENV_REGISTRY;
use robomesh_net::transport::ENV_UDP;
use robomesh_net::{RegistryClient, RegistryServer, ShutdownToken};
use thiserror::Error;

use super::config::{LaunchConfig, NodeSpec, Report, RestartPolicy};

pub const ENV_SIM: &str = "ROBOMESH_SIM";
pub const ENV_NODE_NAME: &str = "ROBOMESH_NODE_NAME";

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CHILD_FAILED: i32 = 3;

pub const STOP_GRACE: Duration = Duration::from_secs(5);
pub const BACKOFF_START: Duration = Duration::from_secs(1);
pub const BACKOFF_CAP: Duration = Duration::from_secs(30);
const POLL: Duration = Duration::from_millis(50);
/// A child that stayed up this long starts its next failure at the
/// initial backoff again.
const STABLE_RUN: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error("invalid configuration:\n{0}")]
    Invalid(Report),
    #[error("registry at {addr}: {source}")]
    Registry { addr: String, source: std::io::Error },
    #[error("registry at {0} is not reachable")]
    RegistryUnreachable(String),
    #[error("spawning {node}: {source}")]
    Spawn { node: String, source: std::io::Error },
}

/// `1, 2, 4, ...` seconds, capped.
pub fn backoff_delay(failures: u32) -> Duration {
    let secs = 1u64.checked_shl(failures.saturating_sub(1)).unwrap_or(u64::MAX);
    (BACKOFF_START * secs.min(BACKOFF_CAP.as_secs()) as u32).min(BACKOFF_CAP)
}

#[derive(Debug, Clone)]
pub struct LaunchOptions {
    /// Binary that runs builtin kinds as `<exe> node <kind> ...`.
    pub exe: PathBuf,
    /// Working directory for children; relative paths in args resolve here.
    pub workdir: PathBuf,
    pub stop_grace: Duration,
}

impl LaunchOptions {
    pub fn new(exe: PathBuf, workdir: PathBuf) -> Self {
        Self {
            exe,
            workdir,
            stop_grace: STOP_GRACE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Running,
    /// Waiting to respawn at the given instant.
    Backoff,
    Exited,
}

struct Slot {
    def: NodeSpec,
    child: Option<Child>,
    pumps: Vec<JoinHandle<()>>,
    started: Instant,
    failures: u32,
    respawn_at: Option<Instant>,
    spawns: u32,
    last_status: Option<ExitStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotStatus {
    pub name: String,
    pub pid: Option<u32>,
    pub state: SlotState,
    pub spawns: u32,
    pub last_exit: Option<i32>,
}

pub struct Supervisor {
    config: LaunchConfig,
    options: LaunchOptions,
    registry: Option<RegistryServer>,
    registry_addr: String,
    slots: Vec<Slot>,
    stopped: bool,
}

fn pump(prefix: String, source: impl Read + Send + 'static, err: bool) -> JoinHandle<()> {
    std::thread::spawn(move || {
        for line in BufReader::new(source).lines() {
            let Ok(line) = line else { break };
            // One write per line keeps each child's lines whole and ordered.
            let text = format!("[{prefix}] {line}\n");
            if err {
                let _ = std::io::stderr().lock().write_all(text.as_bytes());
            } else {
                let _ = std::io::stdout().lock().write_all(text.as_bytes());
            }
        }
    })
}

fn exit_code(status: &ExitStatus) -> i32 {
    status.code().unwrap_or_else(|| 128 + status.signal().unwrap_or(0))
}

impl Supervisor {
    /// Validates, brings up the registry if configured, then spawns every
    /// node. Nothing is spawned when validation reports an error.
    pub fn start(config: LaunchConfig, options: LaunchOptions) -> Result<Self, LaunchError> {
        let report = config.validate();
        if report.has_errors() {
            return Err(LaunchError::Invalid(report));
        }
        for w in &report.findings {
            log::warn!("{}: {}", w.path, w.message);
        }
        let setting = config.registry();
        let (registry, registry_addr) = if setting.internal {
            let server = RegistryServer::bind(setting.address.as_str()).map_err(|source| LaunchError::Registry {
                addr: setting.address.clone(),
                source,
            })?;
            let addr = server.local_addr().to_string();
            log::info!("registry listening on {addr}");
            (Some(server), addr)
        } else {
            if RegistryClient::connect(setting.address.clone()).is_err() {
                return Err(LaunchError::RegistryUnreachable(setting.address));
            }
            (None, setting.address)
        };
        let mut sup = Self {
            slots: config
                .nodes
                .iter()
                .map(|def| Slot {
                    def: def.clone(),
                    child: None,
                    pumps: Vec::new(),
                    started: Instant::now(),
                    failures: 0,
                    respawn_at: None,
                    spawns: 0,
                    last_status: None,
                })
                .collect(),
            config,
            options,
            registry,
            registry_addr,
            stopped: false,
        };
        for i in 0..sup.slots.len() {
            if let Err(e) = sup.spawn(i) {
                sup.shutdown();
                return Err(e);
            }
        }
        Ok(sup)
    }

    pub fn registry_address(&self) -> &str {
        &self.registry_addr
    }

    fn command(&self, def: &NodeSpec) -> Command {
        let mut cmd = match (&def.kind, &def.command) {
            (Some(kind), _) => {
                let mut c = Command::new(&self.options.exe);
                c.args(["node", kind.as_str(), "--name", def.name.as_str()]);
                c
            }
            (None, Some(argv)) => {
                let mut c = Command::new(&argv[0]);
                c.args(&argv[1..]);
                c
            }
            (None, None) => unreachable!("validated"),
        };
        cmd.args(&def.args);
        let sim = def.sim.unwrap_or(self.config.sim());
        cmd.env(ENV_REGISTRY, &self.registry_addr)
            .env(ENV_SIM, if sim { "1" } else { "0" })
            .env(ENV_NODE_NAME, &def.name);
        if let Some(udp) = &self.config.global.udp {
            cmd.env(ENV_UDP, udp);
        }
        cmd.envs(&def.env)
            .current_dir(&self.options.workdir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: only async-signal-safe calls between fork and exec.
        unsafe {
            cmd.pre_exec(|| {
                // Children die with the supervisor even if it is SIGKILLed.
                if libc::prctl(libc::PR_SET_PDEATHSIG, libc::SIGTERM) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                if libc::getppid() == 1 {
                    return Err(std::io::Error::other("supervisor already gone"));
                }
                Ok(())
            });
        }
        cmd
    }

    fn spawn(&mut self, i: usize) -> Result<(), LaunchError> {
        let mut cmd = self.command(&self.slots[i].def);
        let slot = &mut self.slots[i];
        let mut child = cmd.spawn().map_err(|source| LaunchError::Spawn {
            node: slot.def.name.clone(),
            source,
        })?;
        let name = slot.def.name.clone();
        log::info!("started {name} (pid {})", child.id());
        slot.pumps.retain(|p| !p.is_finished());
        if let Some(out) = child.stdout.take() {
            slot.pumps.push(pump(name.clone(), out, false));
        }
        if let Some(err) = child.stderr.take() {
            slot.pumps.push(pump(name, err, true));
        }
        slot.child = Some(child);
        slot.started = Instant::now();
        slot.respawn_at = None;
        slot.spawns += 1;
        Ok(())
    }

    pub fn status(&self) -> Vec<SlotStatus> {
        self.slots
            .iter()
            .map(|s| SlotStatus {
                name: s.def.name.clone(),
                pid: s.child.as_ref().map(Child::id),
                state: if s.child.is_some() {
                    SlotState::Running
                } else if s.respawn_at.is_some() {
                    SlotState::Backoff
                } else {
                    SlotState::Exited
                },
                spawns: s.spawns,
                last_exit: s.last_status.as_ref().map(exit_code),
            })
            .collect()
    }

    pub fn pids(&self) -> Vec<u32> {
        self.slots.iter().filter_map(|s| s.child.as_ref().map(Child::id)).collect()
    }

    /// One supervision pass: reaps exits, schedules and performs respawns.
    /// Returns an exit code once the network is finished.
    pub fn poll(&mut self) -> Option<i32> {
        let now = Instant::now();
        let mut failed = None;
        for slot in &mut self.slots {
            let Some(child) = slot.child.as_mut() else { continue };
            let status = match child.try_wait() {
                Ok(Some(s)) => s,
                Ok(None) => continue,
                Err(e) => {
                    log::warn!("{}: wait failed: {e}", slot.def.name);
                    continue;
                }
            };
            slot.child = None;
            slot.last_status = Some(status);
            if status.success() {
                log::info!("{} exited cleanly", slot.def.name);
                continue;
            }
            log::warn!("{} exited with {}", slot.def.name, exit_code(&status));
            match slot.def.restart {
                RestartPolicy::Never => failed = Some(slot.def.name.clone()),
                RestartPolicy::OnFailure => {
                    if now - slot.started >= STABLE_RUN {
                        slot.failures = 0;
                    }
                    slot.failures += 1;
                    let delay = backoff_delay(slot.failures);
                    log::info!("restarting {} in {} s", slot.def.name, delay.as_secs());
                    slot.respawn_at = Some(now + delay);
                }
            }
        }
        if let Some(name) = failed {
            log::error!("{name} failed under restart: never; stopping the network");
            return Some(EXIT_CHILD_FAILED);
        }
        let due: Vec<usize> = (0..self.slots.len())
            .filter(|&i| self.slots[i].respawn_at.is_some_and(|t| t <= now))
            .collect();
        for i in due {
            if let Err(e) = self.spawn(i) {
                log::error!("{e}");
                self.slots[i].respawn_at = None;
                self.slots[i].failures += 1;
                self.slots[i].respawn_at = Some(now + backoff_delay(self.slots[i].failures));
            }
        }
        let idle = self.slots.iter().all(|s| s.child.is_none() && s.respawn_at.is_none());
        idle.then_some(EXIT_CLEAN)
    }

    /// Supervises until `shutdown` fires or the network finishes, then
    /// tears everything down.
    pub fn run(mut self, shutdown: &ShutdownToken) -> i32 {
        let code = loop {
            if shutdown.is_triggered() {
                break EXIT_CLEAN;
            }
            if let Some(code) = self.poll() {
                break code;
            }
            shutdown.sleep(POLL);
        };
        self.shutdown();
        code
    }

    /// SIGTERM to every child, up to the grace period, then SIGKILL.
    /// Idempotent.
    pub fn shutdown(&mut self) {
        if self.stopped {
            return;
        }
        self.stopped = true;
        for slot in &mut self.slots {
            slot.respawn_at = None;
            if let Some(c) = &slot.child {
                // SAFETY: plain kill(2) on a pid we still own (not yet reaped).
                unsafe {
                    libc::kill(c.id() as libc::pid_t, libc::SIGTERM);
                }
            }
        }
        let deadline = Instant::now() + self.options.stop_grace;
        loop {
            let mut alive = false;
            for slot in &mut self.slots {
                if let Some(c) = slot.child.as_mut() {
                    match c.try_wait() {
                        Ok(Some(s)) => {
                            slot.last_status = Some(s);
                            slot.child = None;
                        }
                        _ => alive = true,
                    }
                }
            }
            if !alive {
                break;
            }
            if Instant::now() >= deadline {
                for slot in &mut self.slots {
                    if let Some(mut c) = slot.child.take() {
                        log::warn!("{} ignored SIGTERM; killing", slot.def.name);
                        let _ = c.kill();
                        slot.last_status = c.wait().ok();
                    }
                }
                break;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        for slot in &mut self.slots {
            for p in slot.pumps.drain(..) {
                let _ = p.join();
            }
        }
        if let Some(mut r) = self.registry.take() {
            r.stop();
        }
    }
}

impl Drop for Supervisor {
    fn drop(&mut self) {
        self.shutdown();
    }
}
