use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

/// Arrival statistics for one channel over a sliding window.
#[derive(Debug, Clone, Default)]
pub struct ChannelStats {
    pub count: u64,
    pub fingerprint: Option<u64>,
    arrivals: VecDeque<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpyRow {
    pub channel: String,
    pub count: u64,
    pub rate_hz: f64,
    pub jitter_ms: f64,
    pub fingerprint: Option<String>,
}

impl ChannelStats {
    fn observe(&mut self, recv_time_us: u64, fingerprint: u64) {
        self.count += 1;
        self.fingerprint = Some(fingerprint);
        self.arrivals.push_back(recv_time_us);
    }

    fn prune(&mut self, oldest_us: u64) {
        while self.arrivals.front().is_some_and(|&t| t < oldest_us) {
            self.arrivals.pop_front();
        }
    }

    /// `(n - 1) / (t_last - t_first)` over the window; 0 below two arrivals.
    pub fn rate_hz(&self) -> f64 {
        match (self.arrivals.front(), self.arrivals.back()) {
            (Some(&a), Some(&b)) if b > a => (self.arrivals.len() - 1) as f64 / ((b - a) as f64 * 1e-6),
            _ => 0.0,
        }
    }

    /// Population standard deviation of inter-arrival gaps, ms.
    pub fn jitter_ms(&self) -> f64 {
        let gaps: Vec<f64> = self
            .arrivals
            .iter()
            .zip(self.arrivals.iter().skip(1))
            .map(|(a, b)| (b - a) as f64 * 1e-3)
            .collect();
        if gaps.len() < 2 {
            return 0.0;
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64).sqrt()
    }
}

/// Per-channel statistics from envelope receive times only.
#[derive(Debug, Clone)]
pub struct Spy {
    pub window_us: u64,
    channels: BTreeMap<String, ChannelStats>,
}

impl Spy {
    pub fn new(window_s: f64) -> Self {
        Self {
            window_us: (window_s * 1e6) as u64,
            channels: BTreeMap::new(),
        }
    }

    /// Lists a channel before anything arrives on it.
    pub fn declare(&mut self, channel: &str) {
        self.channels.entry(channel.to_string()).or_default();
    }

    pub fn observe(&mut self, channel: &str, fingerprint: u64, recv_time_us: u64) {
        self.channels.entry(channel.to_string()).or_default().observe(recv_time_us, fingerprint);
    }

    pub fn stats(&self, channel: &str) -> Option<&ChannelStats> {
        self.channels.get(channel)
    }

    /// Drops arrivals older than the window ending at `now_us`, then reports.
    pub fn rows(&mut self, now_us: u64) -> Vec<SpyRow> {
        let oldest = now_us.saturating_sub(self.window_us);
        self.channels
            .iter_mut()
            .map(|(name, s)| {
                s.prune(oldest);
                SpyRow {
                    channel: name.clone(),
                    count: s.count,
                    rate_hz: s.rate_hz(),
                    jitter_ms: s.jitter_ms(),
                    fingerprint: s.fingerprint.map(|f| format!("{f:016x}")),
                }
            })
            .collect()
    }
}

pub fn render_table(rows: &[SpyRow]) -> String {
    let mut out = format!("{:<32} {:>10} {:>10} {:>11}  {}\n", "channel", "count", "rate Hz", "jitter ms", "fingerprint");
    for r in rows {
        out.push_str(&format!(
            "{:<32} {:>10} {:>10.2} {:>11.3}  {}\n",
            r.channel,
            r.count,
            r.rate_hz,
            r.jitter_ms,
            r.fingerprint.as_deref().unwrap_or("-")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_stream_has_zero_jitter() {
        let mut spy = Spy::new(10.0);
        for k in 0..500u64 {
            spy.observe("a", 7, 1_000_000 + k * 10_000);
        }
        spy.declare("silent");
        let rows = spy.rows(1_000_000 + 499 * 10_000);
        assert_eq!(rows[0].count, 500);
        assert!((rows[0].rate_hz - 100.0).abs() < 1e-9);
        assert_eq!(rows[0].jitter_ms, 0.0);
        assert_eq!((rows[1].count, rows[1].rate_hz), (0, 0.0));
    }

    #[test]
    fn window_drops_old_arrivals() {
        let mut spy = Spy::new(1.0);
        for k in 0..10u64 {
            spy.observe("a", 1, k * 100_000);
        }
        spy.observe("a", 1, 5_000_000);
        let rows = spy.rows(5_000_000);
        assert_eq!(rows[0].count, 11);
        assert_eq!(rows[0].rate_hz, 0.0);
    }
}
