//! The runnable node kinds and the transport-free cores they wrap.

pub mod convert;
pub mod nav;
pub mod sim2d;
pub mod slam;
pub mod teleop;

use std::thread::JoinHandle;

use robomesh_net::{BoxError, Flow, Node, RuntimeError, SpinStats};

/// A node whose loop runs on its own thread. Dropping it stops the loop
/// and, once the last clone of the node goes, deregisters it.
pub struct Running {
    node: Node,
    thread: Option<JoinHandle<Result<SpinStats, RuntimeError>>>,
}

impl Running {
    pub fn spawn<F>(node: Node, rate_hz: f64, step: F) -> Self
    where
        F: FnMut(f64) -> Result<Flow, BoxError> + Send + 'static,
    {
        let looping = node.clone();
        let thread = std::thread::Builder::new()
            .name(format!("{}-loop", node.name()))
            .spawn(move || looping.spin(rate_hz, step))
            .expect("spawn node loop");
        Self { node, thread: Some(thread) }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|t| t.is_finished())
    }

    /// Blocks until the loop ends on its own (shutdown token or error).
    pub fn wait(mut self) -> Result<SpinStats, RuntimeError> {
        self.join()
    }

    pub fn stop(mut self) -> Result<SpinStats, RuntimeError> {
        self.node.shutdown_token().trigger();
        self.join()
    }

    fn join(&mut self) -> Result<SpinStats, RuntimeError> {
        let r = match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(RuntimeError::Callback("node loop panicked".into()))),
            None => Ok(SpinStats {
                iterations: 0,
                elapsed: Default::default(),
            }),
        };
        self.node.close();
        r
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        self.node.shutdown_token().trigger();
        let _ = self.join();
    }
}
