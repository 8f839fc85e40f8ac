//! Request/response on top of pub-sub.
//!
//! A provider listens on `__srv/<node>/<service>/req`. A caller publishes a
//! [`ServiceRequest`] with a random correlation id and a per-call token and
//! waits on `__srv/<node>/<service>/rep/<token>`, resending every quarter of
//! its timeout. Providers remember replies by (token, id) for a while, so a
//! resent or duplicated request runs the handler once and gets the same
//! reply.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use robomesh_msg::{message, Message};
use thiserror::Error;

use super::{check_segment, Node, RuntimeError};
use crate::registry::ServiceDescriptor;

message! {
    pub struct ServiceRequest = "srv_request_t" {
        pub id: i64,
        pub token: String,
        pub request_fingerprint: i64,
        pub reply_fingerprint: i64,
        pub body: Vec<i8>,
    }
}

message! {
    pub struct ServiceReply = "srv_reply_t" {
        pub id: i64,
        pub ok: bool,
        pub error: String,
        pub body: Vec<i8>,
    }
}

pub fn request_channel(node: &str, service: &str) -> String {
    format!("__srv/{node}/{service}/req")
}

pub fn reply_channel(node: &str, service: &str, token: &str) -> String {
    format!("__srv/{node}/{service}/rep/{token}")
}

fn to_i8(bytes: Vec<u8>) -> Vec<i8> {
    bytes.into_iter().map(|b| b as i8).collect()
}

fn to_u8(bytes: &[i8]) -> Vec<u8> {
    bytes.iter().map(|&b| b as u8).collect()
}

/// How long a provider remembers answered requests.
const DEDUP_WINDOW: Duration = Duration::from_secs(30);
const REQUEST_QUEUE: usize = 1024;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("service target {0:?} is not node/service")]
    BadTarget(String),
    #[error("call to {target} timed out after {waited:?}")]
    Timeout { target: String, waited: Duration },
    #[error("{0}")]
    Remote(String),
    #[error("{target} expects request {expected_request:016x} / reply {expected_reply:016x}, caller uses {request:016x} / {reply:016x}")]
    SchemaMismatch {
        target: String,
        expected_request: u64,
        expected_reply: u64,
        request: u64,
        reply: u64,
    },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("undecodable reply: {0}")]
    Decode(String),
}

impl ServiceError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, ServiceError::Timeout { .. })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CallOptions {
    pub timeout: Duration,
    /// Extra copies of every request datagram, for exercising provider
    /// deduplication.
    pub duplicate_requests: u32,
}

impl Default for CallOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(2),
            duplicate_requests: 0,
        }
    }
}

impl CallOptions {
    pub fn with_timeout(timeout: Duration) -> Self {
        Self {
            timeout,
            ..Self::default()
        }
    }
}

pub(super) struct Worker {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

impl Worker {
    pub(super) fn stop(self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.thread.join();
    }
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "handler panicked".into()
    }
}

impl Node {
    /// Serves `service` with `handler`. An `Err` (or a panic) from the
    /// handler becomes an error reply carrying its text.
    pub fn advertise_service<Req, Rep, F>(&self, service: &str, mut handler: F) -> Result<(), RuntimeError>
    where
        Req: Message,
        Rep: Message,
        F: FnMut(Req) -> Result<Rep, String> + Send + 'static,
    {
        check_segment(service, "service names cannot contain '/'")?;
        let mut dup = false;
        self.inner.directory.modify(|r| {
            if r.services.iter().any(|d| d.name == service) {
                dup = true;
            } else {
                r.services.push(ServiceDescriptor {
                    name: service.to_string(),
                    request_fingerprint: Req::fingerprint(),
                    reply_fingerprint: Rep::fingerprint(),
                    is_default: false,
                });
            }
        })?;
        if dup {
            return Err(RuntimeError::DuplicateService(service.to_string()));
        }
        let requests = self.inner.endpoint.subscribe(&request_channel(&self.inner.name, service), REQUEST_QUEUE);
        let endpoint = self.inner.endpoint.clone();
        let node = self.inner.name.clone();
        let svc = service.to_string();
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let req_fp = Req::fingerprint() as i64;
        let rep_fp = Rep::fingerprint() as i64;
        let mut answer = move |req: &ServiceRequest| -> ServiceReply {
            let fail = |error: String| ServiceReply { id: req.id, ok: false, error, body: Vec::new() };
            if req.request_fingerprint != req_fp || req.reply_fingerprint != rep_fp {
                return fail(format!(
                    "schema mismatch: service expects request {:016x} / reply {:016x}",
                    req_fp as u64, rep_fp as u64
                ));
            }
            let value = match Req::decode(&to_u8(&req.body)) {
                Ok(v) => v,
                Err(e) => return fail(format!("bad request: {e}")),
            };
            match catch_unwind(AssertUnwindSafe(|| handler(value))) {
                Ok(Ok(rep)) => match rep.encode() {
                    Ok(bytes) => ServiceReply { id: req.id, ok: true, error: String::new(), body: to_i8(bytes) },
                    Err(e) => fail(format!("reply encoding failed: {e}")),
                },
                Ok(Err(msg)) => fail(msg),
                Err(p) => fail(panic_text(p)),
            }
        };
        let thread = std::thread::Builder::new()
            .name(format!("{node}-{svc}"))
            .spawn(move || {
                let mut answered: HashMap<(String, i64), (Instant, Vec<u8>)> = HashMap::new();
                let mut last_prune = Instant::now();
                while !stop_flag.load(Ordering::SeqCst) {
                    if last_prune.elapsed() > Duration::from_secs(1) {
                        answered.retain(|_, (t, _)| t.elapsed() < DEDUP_WINDOW);
                        last_prune = Instant::now();
                    }
                    let Some(env) = requests.recv(Duration::from_millis(50)) else {
                        continue;
                    };
                    if env.fingerprint != ServiceRequest::fingerprint() {
                        continue;
                    }
                    let Ok(req) = ServiceRequest::decode(&env.payload) else {
                        log::warn!("{node}/{svc}: undecodable request");
                        continue;
                    };
                    let key = (req.token.clone(), req.id);
                    let bytes = match answered.get(&key) {
                        Some((_, bytes)) => bytes.clone(),
                        None => {
                            let reply = answer(&req);
                            let bytes = reply.encode().expect("service reply encodes");
                            answered.insert(key, (Instant::now(), bytes.clone()));
                            bytes
                        }
                    };
                    let channel = reply_channel(&node, &svc, &req.token);
                    if let Err(e) = endpoint.publish(&channel, ServiceReply::fingerprint(), &bytes) {
                        log::warn!("{node}/{svc}: reply failed: {e}");
                    }
                }
            })
            .map_err(crate::TransportError::Bind)?;
        self.inner.services.lock().unwrap().push(Worker { stop, thread });
        Ok(())
    }

    /// Calls `target` ("node/service") with the default options.
    pub fn call_service<Req: Message, Rep: Message>(&self, target: &str, request: &Req, timeout: Duration) -> Result<Rep, ServiceError> {
        self.call_service_with(target, request, CallOptions::with_timeout(timeout))
    }

    pub fn call_service_with<Req: Message, Rep: Message>(&self, target: &str, request: &Req, opts: CallOptions) -> Result<Rep, ServiceError> {
        let start = Instant::now();
        let deadline = start + opts.timeout;
        let timeout_err = || ServiceError::Timeout { target: target.to_string(), waited: start.elapsed() };
        let (provider, service) = target
            .split_once('/')
            .filter(|(n, s)| !n.is_empty() && !s.is_empty() && !s.contains('/'))
            .ok_or_else(|| ServiceError::BadTarget(target.to_string()))?;

        // Discovery first: poll the registry until the provider shows up.
        let entry = loop {
            let found = self.with_registry(|c| c.lookup_service(target)).map_err(RuntimeError::from)?;
            if let Some(e) = found {
                break e;
            }
            if Instant::now() + Duration::from_millis(50) >= deadline {
                return Err(timeout_err());
            }
            std::thread::sleep(Duration::from_millis(50));
        };
        let d = &entry.descriptor;
        if d.request_fingerprint != Req::fingerprint() || d.reply_fingerprint != Rep::fingerprint() {
            return Err(ServiceError::SchemaMismatch {
                target: target.to_string(),
                expected_request: d.request_fingerprint,
                expected_reply: d.reply_fingerprint,
                request: Req::fingerprint(),
                reply: Rep::fingerprint(),
            });
        }

        let n = self.inner.calls.fetch_add(1, Ordering::Relaxed);
        let token = format!("{}.{n}", self.inner.name);
        let id: i64 = rand::random();
        let replies = self.inner.endpoint.subscribe(&reply_channel(provider, service, &token), 16);
        let body = to_i8(request.encode().map_err(RuntimeError::from)?);
        let req = ServiceRequest {
            id,
            token,
            request_fingerprint: Req::fingerprint() as i64,
            reply_fingerprint: Rep::fingerprint() as i64,
            body,
        };
        let bytes = req.encode().map_err(RuntimeError::from)?;
        let req_channel = request_channel(provider, service);
        let send = || -> Result<(), ServiceError> {
            for _ in 0..=opts.duplicate_requests {
                self.inner
                    .endpoint
                    .publish(&req_channel, ServiceRequest::fingerprint(), &bytes)
                    .map_err(RuntimeError::from)?;
            }
            Ok(())
        };
        let retry = (opts.timeout / 4).max(Duration::from_millis(1));
        send()?;
        let mut next_send = Instant::now() + retry;
        loop {
            let now = Instant::now();
            if now >= deadline {
                return Err(timeout_err());
            }
            if now >= next_send {
                send()?;
                next_send = now + retry;
            }
            let wait = next_send.min(deadline).saturating_duration_since(now);
            let Some(env) = replies.recv(wait) else {
                continue;
            };
            if env.fingerprint != ServiceReply::fingerprint() {
                continue;
            }
            let Ok(reply) = ServiceReply::decode(&env.payload) else {
                continue;
            };
            if reply.id != id {
                continue;
            }
            if !reply.ok {
                return Err(ServiceError::Remote(reply.error));
            }
            return Rep::decode(&to_u8(&reply.body)).map_err(|e| ServiceError::Decode(e.to_string()));
        }
    }
}
