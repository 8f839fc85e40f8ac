use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::RuntimeError;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Cooperative stop flag, settable from signal handlers.
#[derive(Debug, Clone, Default)]
pub struct ShutdownToken(Arc<AtomicBool>);

impl ShutdownToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trigger(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_triggered(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }

    /// SIGINT and SIGTERM set this token.
    pub fn install_signal_handlers(&self) -> std::io::Result<()> {
        for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
            signal_hook::flag::register(sig, Arc::clone(&self.0))?;
        }
        Ok(())
    }

    /// Sleeps up to `d`, waking early on shutdown; true if triggered.
    pub fn sleep(&self, d: Duration) -> bool {
        let end = Instant::now() + d;
        loop {
            if self.is_triggered() {
                return true;
            }
            let now = Instant::now();
            if now >= end {
                return false;
            }
            std::thread::sleep((end - now).min(Duration::from_millis(20)));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinStats {
    pub iterations: u64,
    pub elapsed: Duration,
}

/// Calls `step(dt)` at `rate_hz` against absolute deadlines, so the
/// average rate does not drift with the step's own run time.
pub fn spin<F>(rate_hz: f64, shutdown: &ShutdownToken, mut step: F) -> Result<SpinStats, RuntimeError>
where
    F: FnMut(f64) -> Result<Flow, BoxError>,
{
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(RuntimeError::BadRate(rate_hz));
    }
    let period = Duration::from_secs_f64(1.0 / rate_hz);
    let start = Instant::now();
    let mut last = start;
    let mut next = start;
    let mut iterations = 0;
    while !shutdown.is_triggered() {
        let now = Instant::now();
        let dt = if iterations == 0 { period.as_secs_f64() } else { (now - last).as_secs_f64() };
        last = now;
        iterations += 1;
        match step(dt) {
            Ok(Flow::Continue) => {}
            Ok(Flow::Stop) => break,
            Err(e) => return Err(RuntimeError::Callback(e.to_string())),
        }
        next += period;
        let now = Instant::now();
        if next < now {
            // Overran by more than a period: skip missed ticks rather than burst.
            if now - next > period {
                next = now;
            }
            continue;
        }
        shutdown.sleep(next - now);
    }
    Ok(SpinStats {
        iterations,
        elapsed: start.elapsed(),
    })
}
