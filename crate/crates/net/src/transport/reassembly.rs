//! Fragment reassembly keyed by (sender address, message id).

use std::collections::HashMap;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use super::packet::EnvelopeHeader;

pub const DEFAULT_MAX_AGE: Duration = Duration::from_secs(1);
pub const DEFAULT_BYTE_CAP: usize = 64 << 20;

type Key = (SocketAddr, u64);

struct Partial {
    count: u32,
    header: Option<EnvelopeHeader>,
    parts: Vec<Option<Vec<u8>>>,
    received: u32,
    bytes: usize,
    first_seen: Instant,
}

pub struct Reassembler {
    partials: HashMap<Key, Partial>,
    /// Recently completed messages; late duplicates of their fragments are
    /// dropped instead of starting a new partial.
    completed: HashMap<Key, Instant>,
    bytes: usize,
    max_age: Duration,
    byte_cap: usize,
    evicted: u64,
}

impl Default for Reassembler {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_AGE, DEFAULT_BYTE_CAP)
    }
}

impl Reassembler {
    pub fn new(max_age: Duration, byte_cap: usize) -> Self {
        Self {
            partials: HashMap::new(),
            completed: HashMap::new(),
            bytes: 0,
            max_age,
            byte_cap,
            evicted: 0,
        }
    }

    pub fn buffered_bytes(&self) -> usize {
        self.bytes
    }

    pub fn pending(&self) -> usize {
        self.partials.len()
    }

    /// Partial messages dropped by age or by the byte cap.
    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    /// Drops partials older than the max age.
    pub fn expire(&mut self, now: Instant) {
        let max_age = self.max_age;
        let mut dropped = 0;
        let mut freed = 0;
        self.partials.retain(|_, p| {
            let keep = now.duration_since(p.first_seen) <= max_age;
            if !keep {
                dropped += 1;
                freed += p.bytes;
            }
            keep
        });
        self.bytes -= freed;
        self.evicted += dropped;
        self.completed
            .retain(|_, t| now.duration_since(*t) <= max_age * 5);
    }

    /// Adds one fragment; returns the header and full payload once the last
    /// missing fragment arrives.
    pub fn accept(
        &mut self,
        from: SocketAddr,
        message_id: u64,
        index: u32,
        count: u32,
        header: Option<EnvelopeHeader>,
        payload: &[u8],
        now: Instant,
    ) -> Option<(EnvelopeHeader, Vec<u8>)> {
        self.expire(now);
        let key = (from, message_id);
        if self.completed.contains_key(&key) || index >= count {
            return None;
        }
        let p = self.partials.entry(key).or_insert_with(|| Partial {
            count,
            header: None,
            parts: vec![None; count as usize],
            received: 0,
            bytes: 0,
            first_seen: now,
        });
        if p.count != count || p.parts[index as usize].is_some() {
            return None;
        }
        p.parts[index as usize] = Some(payload.to_vec());
        p.received += 1;
        p.bytes += payload.len();
        self.bytes += payload.len();
        if header.is_some() {
            p.header = header;
        }
        if p.received == p.count {
            let p = self.partials.remove(&key).expect("present");
            self.bytes -= p.bytes;
            self.completed.insert(key, now);
            let header = p.header?;
            let mut out = Vec::with_capacity(p.bytes);
            for part in p.parts.into_iter().flatten() {
                out.extend_from_slice(&part);
            }
            return Some((header, out));
        }
        self.enforce_cap(key);
        None
    }

    fn enforce_cap(&mut self, keep: Key) {
        while self.bytes > self.byte_cap {
            let oldest = self
                .partials
                .iter()
                .filter(|(k, _)| **k != keep)
                .min_by_key(|(_, p)| p.first_seen)
                .map(|(k, _)| *k);
            let victim = oldest.unwrap_or(keep);
            let p = self.partials.remove(&victim).expect("present");
            self.bytes -= p.bytes;
            self.evicted += 1;
            if victim == keep {
                break;
            }
        }
    }
}
