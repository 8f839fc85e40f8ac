//! Read-only introspection: topology graph, channel statistics and taps.

mod graph;
mod spy;
mod tap;

pub use graph::{ChannelVertex, Edge, EdgeKind, Graph, NodeVertex};
pub use spy::{render_table, ChannelStats, Spy, SpyRow};
pub use tap::{Tap, TapLine};
