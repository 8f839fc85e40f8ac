use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use super::{NodeRecord, Request, Response, ServiceEntry, Snapshot};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry at {0} unreachable: {1}")]
    Unreachable(String, std::io::Error),
    #[error("registry connection failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry sent an unreadable reply: {0}")]
    Protocol(String),
    #[error("{0}")]
    Rejected(String),
}

pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(2);
const IO_TIMEOUT: Duration = Duration::from_secs(5);

struct Conn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

/// Blocking client. A failed request reconnects once and retries, so a
/// restarted registry is picked up transparently.
pub struct RegistryClient {
    address: String,
    conn: Option<Conn>,
}

fn resolve(address: &str) -> Result<SocketAddr, RegistryError> {
    address
        .to_socket_addrs()
        .map_err(|e| RegistryError::Unreachable(address.to_string(), e))?
        .next()
        .ok_or_else(|| {
            RegistryError::Unreachable(address.to_string(), std::io::Error::other("no address"))
        })
}

fn open(address: &str) -> Result<Conn, RegistryError> {
    let addr = resolve(address)?;
    let stream = TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT)
        .map_err(|e| RegistryError::Unreachable(address.to_string(), e))?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    Ok(Conn {
        writer: stream.try_clone()?,
        reader: BufReader::new(stream),
    })
}

impl RegistryClient {
    /// Connects, failing within two seconds if nothing answers.
    pub fn connect(address: impl Into<String>) -> Result<Self, RegistryError> {
        let address = address.into();
        let conn = open(&address)?;
        Ok(Self {
            address,
            conn: Some(conn),
        })
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    fn exchange(&mut self, line: &[u8]) -> Result<Response, RegistryError> {
        if self.conn.is_none() {
            self.conn = Some(open(&self.address)?);
        }
        let conn = self.conn.as_mut().expect("connected");
        let result = (|| {
            conn.writer.write_all(line)?;
            let mut buf = String::new();
            if conn.reader.read_line(&mut buf)? == 0 {
                return Err(RegistryError::Io(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "registry closed the connection",
                )));
            }
            serde_json::from_str(&buf).map_err(|e| RegistryError::Protocol(e.to_string()))
        })();
        if result.is_err() {
            self.conn = None;
        }
        result
    }

    /// Sends one request; the reply may carry `ok: false`.
    pub fn request(&mut self, req: &Request) -> Result<Response, RegistryError> {
        let mut line = serde_json::to_vec(req).expect("request serializes");
        line.push(b'\n');
        match self.exchange(&line) {
            Err(RegistryError::Io(_)) | Err(RegistryError::Protocol(_)) => self.exchange(&line),
            other => other,
        }
    }

    fn checked(&mut self, req: &Request) -> Result<Response, RegistryError> {
        let r = self.request(req)?;
        if r.ok {
            Ok(r)
        } else {
            Err(RegistryError::Rejected(r.error.unwrap_or_else(|| "rejected".into())))
        }
    }

    pub fn register(&mut self, record: &NodeRecord) -> Result<(), RegistryError> {
        self.checked(&Request::Register { record: record.clone() }).map(drop)
    }

    pub fn update(&mut self, record: &NodeRecord) -> Result<(), RegistryError> {
        self.checked(&Request::Update { record: record.clone() }).map(drop)
    }

    /// Returns false when the registry did not know the node.
    pub fn heartbeat(&mut self, node: &str) -> Result<bool, RegistryError> {
        let r = self.checked(&Request::Heartbeat { node: node.into() })?;
        Ok(r.warning.is_none())
    }

    pub fn deregister(&mut self, node: &str) -> Result<(), RegistryError> {
        self.checked(&Request::Deregister { node: node.into() }).map(drop)
    }

    pub fn list_nodes(&mut self) -> Result<Vec<NodeRecord>, RegistryError> {
        Ok(self.checked(&Request::ListNodes)?.nodes.unwrap_or_default())
    }

    pub fn list_services(&mut self) -> Result<Vec<ServiceEntry>, RegistryError> {
        Ok(self.checked(&Request::ListServices)?.services.unwrap_or_default())
    }

    /// `Ok(None)` when no live node provides it.
    pub fn lookup_service(&mut self, name: &str) -> Result<Option<ServiceEntry>, RegistryError> {
        let r = self.request(&Request::LookupService { name: name.into() })?;
        Ok(if r.ok { r.service } else { None })
    }

    pub fn snapshot(&mut self) -> Result<Snapshot, RegistryError> {
        self.checked(&Request::Snapshot)?
            .snapshot
            .ok_or_else(|| RegistryError::Protocol("snapshot missing".into()))
    }
}
