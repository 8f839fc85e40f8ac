//! Gym-style environments whose observations and actions are channels.

mod driver;
mod env;
mod space;

pub use driver::{Driver, DriverConfig, DriverError, DriverKind, Reading};
pub use env::{
    action, make_env, Action, EnvConfig, EnvError, Environment, Info, ObsEntry, Observation, RewardHook, StepResult,
    TerminationHook, Trace, SERVICE_WAIT,
};
pub use space::{SpaceError, SpaceSpec};
