//! Message logging: a bit-exact log file, a recorder node, timed replay and
//! CSV export.

mod export;
mod format;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use robomesh_net::{Node, RuntimeError, ShutdownToken};

pub use export::{
    export_csv, flatten_columns, format_cell, interpolate, lerp_scalar, tick_times, ExportError, ExportOptions,
    ExportReport, ResampleMode,
};
pub use format::{parse_log, read_log, LogContents, LogError, LogRecord, LogWriter, MAGIC, VERSION};

pub const FLUSH_INTERVAL: Duration = Duration::from_millis(100);
const RECORD_QUEUE: usize = 1 << 16;

/// A running recorder. Dropping it without [`Recorder::stop`] stops it too.
pub struct Recorder {
    stop: Arc<AtomicBool>,
    count: Arc<AtomicU64>,
    thread: Option<JoinHandle<Result<u64, LogError>>>,
}

impl Recorder {
    /// Records every envelope on channels matching `filters` into `path`.
    pub fn start(node: &Node, filters: &[&str], path: impl AsRef<Path>) -> Result<Self, RecordError> {
        let mut writer = LogWriter::create(path)?;
        writer.flush()?;
        let sub = node.create_raw_subscriber(filters, RECORD_QUEUE)?;
        let stop = Arc::new(AtomicBool::new(false));
        let count = Arc::new(AtomicU64::new(0));
        let thread = {
            let stop = Arc::clone(&stop);
            let count = Arc::clone(&count);
            std::thread::Builder::new()
                .name("recorder".into())
                .spawn(move || {
                    let mut last_flush = Instant::now();
                    loop {
                        let stopping = stop.load(Ordering::SeqCst);
                        let batch = if stopping {
                            sub.drain()
                        } else {
                            sub.recv(Duration::from_millis(20)).into_iter().chain(sub.drain()).collect()
                        };
                        for env in batch {
                            writer.append(env.recv_time_us, &env.channel, env.fingerprint, &env.payload)?;
                            count.fetch_add(1, Ordering::SeqCst);
                        }
                        if stopping || last_flush.elapsed() >= FLUSH_INTERVAL {
                            writer.flush()?;
                            last_flush = Instant::now();
                        }
                        if stopping {
                            if sub.drop_count() > 0 {
                                log::warn!("recorder queue overflowed, {} envelopes lost", sub.drop_count());
                            }
                            return Ok(writer.records_written());
                        }
                    }
                })
                .map_err(LogError::Io)?
        };
        Ok(Self {
            stop,
            count,
            thread: Some(thread),
        })
    }

    pub fn records(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }

    /// False once the writer has failed or the recorder was stopped.
    pub fn is_running(&self) -> bool {
        self.thread.as_ref().is_some_and(|t| !t.is_finished())
    }

    /// Flushes pending envelopes and closes the file; returns the record count.
    pub fn stop(mut self) -> Result<u64, LogError> {
        self.finish()
    }

    fn finish(&mut self) -> Result<u64, LogError> {
        self.stop.store(true, Ordering::SeqCst);
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(LogError::Io(std::io::Error::other("recorder panicked")))),
            None => Ok(self.records()),
        }
    }
}

impl Drop for Recorder {
    fn drop(&mut self) {
        if let Err(e) = self.finish() {
            log::error!("recorder: {e}");
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub speed: f64,
    /// Exact channel renames applied before publishing.
    pub remap: BTreeMap<String, String>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            speed: 1.0,
            remap: BTreeMap::new(),
        }
    }
}

/// Parses `from=to` pairs.
pub fn parse_remap(pairs: &[String]) -> Result<BTreeMap<String, String>, String> {
    pairs
        .iter()
        .map(|p| match p.split_once('=') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
            _ => Err(format!("remap must be from=to, got {p:?}")),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayStats {
    pub published: u64,
    pub elapsed: Duration,
}

/// Republishes `log` through `node`, spacing publications by the recorded
/// receive-time gaps divided by the speed. Stops early on `shutdown`.
pub fn replay(node: &Node, log: &LogContents, options: &ReplayOptions, shutdown: &ShutdownToken) -> Result<ReplayStats, RuntimeError> {
    if !(options.speed > 0.0 && options.speed.is_finite()) {
        return Err(RuntimeError::BadRate(options.speed));
    }
    let target = |c: &str| options.remap.get(c).cloned().unwrap_or_else(|| c.to_string());
    let mut declared = BTreeMap::new();
    for r in &log.records {
        let channel = target(&r.channel);
        if !declared.contains_key(&channel) {
            node.create_raw_publisher(&channel, r.fingerprint)?;
            declared.insert(channel, ());
        }
    }
    let start = Instant::now();
    let Some(t0) = log.records.first().map(|r| r.recv_time_us) else {
        return Ok(ReplayStats {
            published: 0,
            elapsed: Duration::ZERO,
        });
    };
    let mut published = 0;
    for r in &log.records {
        let due = start + Duration::from_secs_f64((r.recv_time_us - t0) as f64 * 1e-6 / options.speed);
        let now = Instant::now();
        if due > now && shutdown.sleep(due - now) {
            break;
        }
        if shutdown.is_triggered() {
            break;
        }
        node.endpoint().publish(&target(&r.channel), r.fingerprint, &r.payload)?;
        published += 1;
    }
    Ok(ReplayStats {
        published,
        elapsed: start.elapsed(),
    })
}
