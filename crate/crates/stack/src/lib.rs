//! The robomesh stack on top of the message and network layers: message
//! logs, Gym-style environments, the simulator/SLAM/navigation/teleop
//! nodes, introspection tools, the launcher and the browser bridge.

pub mod bridge;
pub mod envkit;
pub mod launcher;
pub mod logkit;
pub mod nodes;
pub mod pipeline;
pub mod tools;
