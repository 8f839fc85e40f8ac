//! Networking for robomesh: the UDP pub-sub transport, the discovery
//! registry, and the node runtime (typed publishers, subscribers, services).

pub mod registry;
pub mod runtime;
pub mod transport;

pub use registry::{NodeRecord, RegistryClient, RegistryError, RegistryServer, Snapshot};
pub use runtime::{
    BoxError, CallOptions, Flow, Node, NodeOptions, Publisher, RawPublisher, RuntimeError, Sample, ServiceError, ShutdownToken, SpinStats,
    Subscriber,
};
pub use transport::{ChannelFilter, Endpoint, EndpointConfig, Envelope, Mode, Subscription, TransportError};
