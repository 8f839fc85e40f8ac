//! Log file layout, all integers big-endian:
//!
//! ```text
//! "ARKLOG01" | version u32
//! record*: event_index u64 | recv_time_us u64 | channel_len u32 | channel
//!          | fingerprint u64 | payload_len u32 | payload
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"ARKLOG01";
pub const VERSION: u32 = 1;
const MAX_FIELD: usize = 64 << 20;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a robomesh log (bad magic)")]
    BadMagic,
    #[error("unsupported log version {0}")]
    Version(u32),
    #[error("record {index}: {reason}")]
    Corrupt { index: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub event_index: u64,
    pub recv_time_us: u64,
    pub channel: String,
    pub fingerprint: u64,
    pub payload: Vec<u8>,
}

/// Appends records, assigning event indices from 0 and keeping receive
/// times nondecreasing.
pub struct LogWriter<W: Write> {
    out: W,
    next_index: u64,
    last_time: u64,
}

impl LogWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, LogError> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W) -> Result<Self, LogError> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_be_bytes())?;
        Ok(Self {
            out,
            next_index: 0,
            last_time: 0,
        })
    }

    pub fn records_written(&self) -> u64 {
        self.next_index
    }

    /// Returns the event index given to the record.
    pub fn append(&mut self, recv_time_us: u64, channel: &str, fingerprint: u64, payload: &[u8]) -> Result<u64, LogError> {
        let t = recv_time_us.max(self.last_time);
        let mut buf = Vec::with_capacity(32 + channel.len() + payload.len());
        buf.extend_from_slice(&self.next_index.to_be_bytes());
        buf.extend_from_slice(&t.to_be_bytes());
        buf.extend_from_slice(&(channel.len() as u32).to_be_bytes());
        buf.extend_from_slice(channel.as_bytes());
        buf.extend_from_slice(&fingerprint.to_be_bytes());
        buf.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        buf.extend_from_slice(payload);
        self.out.write_all(&buf)?;
        self.last_time = t;
        self.next_index += 1;
        Ok(self.next_index - 1)
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        Ok(self.out.flush()?)
    }

    pub fn into_inner(mut self) -> Result<W, LogError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Everything readable from a log. A final record cut short by a crash is
/// dropped and reported through `truncated`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LogContents {
    pub records: Vec<LogRecord>,
    pub truncated: bool,
}

impl LogContents {
    pub fn span_us(&self) -> Option<(u64, u64)> {
        Some((self.records.first()?.recv_time_us, self.records.last()?.recv_time_us))
    }
}

/// Fills `buf` completely, or returns false at a clean or partial EOF.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<bool, std::io::Error> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => return Ok(false),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

pub fn read_log(path: impl AsRef<Path>) -> Result<LogContents, LogError> {
    parse_log(BufReader::new(File::open(path)?))
}

pub fn parse_log(mut r: impl Read) -> Result<LogContents, LogError> {
    let mut head = [0u8; 12];
    if !read_full(&mut r, &mut head)? || &head[..8] != MAGIC {
        return Err(LogError::BadMagic);
    }
    let version = u32::from_be_bytes(head[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(LogError::Version(version));
    }
    let mut out = LogContents::default();
    let mut prev_time = 0u64;
    loop {
        let expected = out.records.len() as u64;
        let mut fixed = [0u8; 20];
        let mut first = [0u8; 1];
        // Clean end of file only between records.
        if !read_full(&mut r, &mut first)? {
            break;
        }
        fixed[0] = first[0];
        if !read_full(&mut r, &mut fixed[1..])? {
            out.truncated = true;
            break;
        }
        let event_index = u64::from_be_bytes(fixed[0..8].try_into().unwrap());
        let recv_time_us = u64::from_be_bytes(fixed[8..16].try_into().unwrap());
        let channel_len = u32::from_be_bytes(fixed[16..20].try_into().unwrap()) as usize;
        let corrupt = |reason: String| LogError::Corrupt { index: expected, reason };
        if event_index != expected {
            return Err(corrupt(format!("event index {event_index}, expected {expected}")));
        }
        if recv_time_us < prev_time {
            return Err(corrupt("receive time went backwards".into()));
        }
        if channel_len > 255 {
            return Err(corrupt(format!("channel length {channel_len}")));
        }
        let mut channel = vec![0u8; channel_len];
        let mut fp_len = [0u8; 12];
        if !read_full(&mut r, &mut channel)? || !read_full(&mut r, &mut fp_len)? {
            out.truncated = true;
            break;
        }
        let channel = String::from_utf8(channel).map_err(|_| corrupt("channel is not UTF-8".into()))?;
        let fingerprint = u64::from_be_bytes(fp_len[0..8].try_into().unwrap());
        let payload_len = u32::from_be_bytes(fp_len[8..12].try_into().unwrap()) as usize;
        if payload_len > MAX_FIELD {
            return Err(corrupt(format!("payload length {payload_len}")));
        }
        let mut payload = vec![0u8; payload_len];
        if !read_full(&mut r, &mut payload)? {
            out.truncated = true;
            break;
        }
        prev_time = recv_time_us;
        out.records.push(LogRecord {
            event_index,
            recv_time_us,
            channel,
            fingerprint,
            payload,
        });
    }
    Ok(out)
}
