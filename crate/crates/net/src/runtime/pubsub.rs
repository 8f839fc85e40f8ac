use std::marker::PhantomData;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use robomesh_msg::Message;

use super::RuntimeError;
use crate::transport::{Endpoint, Envelope, Subscription};

pub struct Publisher<M> {
    channel: String,
    endpoint: Endpoint,
    _m: PhantomData<fn(M)>,
}

impl<M: Message> Publisher<M> {
    pub(super) fn new(channel: String, endpoint: Endpoint) -> Self {
        Self {
            channel,
            endpoint,
            _m: PhantomData,
        }
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    /// Encodes and sends; returns the sequence number used.
    pub fn publish(&self, msg: &M) -> Result<u64, RuntimeError> {
        let bytes = msg.encode()?;
        Ok(self.endpoint.publish(&self.channel, M::fingerprint(), &bytes)?)
    }
}

pub struct RawPublisher {
    channel: String,
    fingerprint: u64,
    endpoint: Endpoint,
}

impl RawPublisher {
    pub(super) fn new(channel: String, fingerprint: u64, endpoint: Endpoint) -> Self {
        Self {
            channel,
            fingerprint,
            endpoint,
        }
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn publish(&self, payload: &[u8]) -> Result<u64, RuntimeError> {
        Ok(self.endpoint.publish(&self.channel, self.fingerprint, payload)?)
    }
}

/// A decoded message with its envelope metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<M> {
    pub value: M,
    pub channel: String,
    pub sequence: u64,
    pub send_time_us: u64,
    pub recv_time_us: u64,
}

pub struct Subscriber<M> {
    sub: Subscription,
    mismatched: AtomicU64,
    undecodable: AtomicU64,
    latest: Mutex<Option<Sample<M>>>,
}

impl<M: Message> Subscriber<M> {
    pub(super) fn new(sub: Subscription) -> Self {
        Self {
            sub,
            mismatched: AtomicU64::new(0),
            undecodable: AtomicU64::new(0),
            latest: Mutex::new(None),
        }
    }

    fn accept(&self, env: Envelope) -> Option<Sample<M>> {
        if env.fingerprint != M::fingerprint() {
            self.mismatched.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        match M::decode(&env.payload) {
            Ok(value) => {
                let s = Sample {
                    value,
                    channel: env.channel,
                    sequence: env.sequence,
                    send_time_us: env.send_time_us,
                    recv_time_us: env.recv_time_us,
                };
                *self.latest.lock().unwrap() = Some(s.clone());
                Some(s)
            }
            Err(e) => {
                log::warn!("{}: undecodable {}: {e}", env.channel, M::NAME);
                self.undecodable.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Next well-typed message, waiting up to `timeout`.
    pub fn recv(&self, timeout: Duration) -> Option<Sample<M>> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let env = self.sub.recv(left)?;
            if let Some(s) = self.accept(env) {
                return Some(s);
            }
        }
    }

    pub fn try_recv(&self) -> Option<Sample<M>> {
        while let Some(env) = self.sub.try_recv() {
            if let Some(s) = self.accept(env) {
                return Some(s);
            }
        }
        None
    }

    /// Everything queued, oldest first.
    pub fn drain(&self) -> Vec<Sample<M>> {
        self.sub.drain().into_iter().filter_map(|e| self.accept(e)).collect()
    }

    /// Most recent message seen so far (draining the queue first).
    pub fn latest(&self) -> Option<M> {
        self.latest_sample().map(|s| s.value)
    }

    pub fn latest_sample(&self) -> Option<Sample<M>> {
        self.drain();
        self.latest.lock().unwrap().clone()
    }

    /// Envelopes discarded for carrying another schema's fingerprint.
    pub fn mismatch_count(&self) -> u64 {
        self.mismatched.load(Ordering::Relaxed)
    }

    pub fn decode_errors(&self) -> u64 {
        self.undecodable.load(Ordering::Relaxed)
    }

    pub fn drop_count(&self) -> u64 {
        self.sub.drop_count()
    }
}
