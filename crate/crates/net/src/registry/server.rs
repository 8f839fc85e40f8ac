use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::state::RegistryState;
use super::{Request, Response};
use crate::transport::now_us;

/// A running registry. Stops when dropped.
pub struct RegistryServer {
    addr: SocketAddr,
    state: Arc<Mutex<RegistryState>>,
    running: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl RegistryServer {
    /// Binds `addr` (port 0 picks a free port) with the default expiry.
    pub fn bind(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        Self::with_state(addr, RegistryState::default())
    }

    pub fn with_state(addr: impl ToSocketAddrs, state: RegistryState) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(Mutex::new(state));
        let running = Arc::new(AtomicBool::new(true));
        let accept = {
            let state = Arc::clone(&state);
            let running = Arc::clone(&running);
            std::thread::Builder::new()
                .name("registry-accept".into())
                .spawn(move || accept_loop(listener, state, running))?
        };
        log::info!("registry listening on {addr}");
        Ok(Self {
            addr,
            state,
            running,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Applies one request directly, as a connected client would.
    pub fn handle(&self, req: Request) -> Response {
        self.state.lock().unwrap().handle(req, now_us())
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::SeqCst)
    }

    pub fn stop(&mut self) {
        self.running.store(false, Ordering::SeqCst);
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RegistryServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, state: Arc<Mutex<RegistryState>>, running: Arc<AtomicBool>) {
    let mut clients: Vec<JoinHandle<()>> = Vec::new();
    while running.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let state = Arc::clone(&state);
                let running = Arc::clone(&running);
                match std::thread::Builder::new()
                    .name("registry-conn".into())
                    .spawn(move || serve_connection(stream, peer, state, running))
                {
                    Ok(h) => clients.push(h),
                    Err(e) => log::error!("cannot serve {peer}: {e}"),
                }
                clients.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
    for h in clients {
        let _ = h.join();
    }
}

fn serve_connection(stream: TcpStream, peer: SocketAddr, state: Arc<Mutex<RegistryState>>, running: Arc<AtomicBool>) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_nodelay(true);
    let _ = stream.set_read_timeout(Some(Duration::from_millis(100)));
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    while running.load(Ordering::SeqCst) {
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => break,
            Ok(_) if line.last() != Some(&b'\n') => break,
            Ok(_) => {
                let text = String::from_utf8_lossy(&line);
                let text = text.trim();
                if !text.is_empty() {
                    let resp = match serde_json::from_str::<Request>(text) {
                        Ok(req) => state.lock().unwrap().handle(req, now_us()),
                        Err(e) => Response::error(format!("bad request: {e}")),
                    };
                    let mut out = serde_json::to_vec(&resp).expect("response serializes");
                    out.push(b'\n');
                    if writer.write_all(&out).is_err() {
                        break;
                    }
                }
                line.clear();
            }
            // Partial lines stay in `line` across timeouts.
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {}
            Err(e) => {
                log::debug!("registry client {peer}: {e}");
                break;
            }
        }
    }
}
