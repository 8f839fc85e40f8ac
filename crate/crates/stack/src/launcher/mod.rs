//! One YAML file describing a whole network, and the supervisor that runs it.

mod config;
mod supervisor;

pub use config::{
    parse_registry, Finding, GlobalConfig, LaunchConfig, NodeSpec, RegistrySetting, Report, RestartPolicy, Severity, SyntaxError, BUILTIN_KINDS,
    DEFAULT_REGISTRY,
};
pub use supervisor::{
    backoff_delay, LaunchError, LaunchOptions, SlotState, SlotStatus, Supervisor, BACKOFF_CAP, BACKOFF_START, ENV_NODE_NAME, ENV_SIM, EXIT_CHILD_FAILED,
    EXIT_CLEAN, EXIT_INVALID, STOP_GRACE,
};

/// `ROBOMESH_SIM` as set by the launcher; absent means simulation.
pub fn sim_from_env() -> bool {
    !matches!(std::env::var(ENV_SIM).as_deref(), Ok("0") | Ok("false"))
}
