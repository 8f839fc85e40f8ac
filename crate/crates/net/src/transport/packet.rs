//! Datagram layout. All integers big-endian.
//!
//! ```text
//! SHORT: "ARK1" | fingerprint u64 | sequence u64 | send_time_us u64 | channel_len u8 | channel | payload
//! FRAG:  "ARKF" | message_id u64 | fragment_index u32 | fragment_count u32
//!        | (fragment 0 only) fingerprint u64 | sequence u64 | send_time_us u64 | channel_len u8 | channel
//!        | payload slice
//! ```

pub const SHORT_MAGIC: &[u8; 4] = b"ARK1";
pub const FRAG_MAGIC: &[u8; 4] = b"ARKF";

/// `fingerprint | sequence | send_time_us | channel_len`.
pub const ENVELOPE_HEADER_LEN: usize = 25;
/// `magic | message_id | fragment_index | fragment_count`.
pub const FRAG_PREFIX_LEN: usize = 20;
pub const MAX_PAYLOAD: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopeHeader {
    pub fingerprint: u64,
    pub sequence: u64,
    pub send_time_us: u64,
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet<'a> {
    Short {
        header: EnvelopeHeader,
        payload: &'a [u8],
    },
    Frag {
        message_id: u64,
        index: u32,
        count: u32,
        /// Present on fragment 0 only.
        header: Option<EnvelopeHeader>,
        payload: &'a [u8],
    },
}

fn put_header(out: &mut Vec<u8>, h: &EnvelopeHeader) {
    out.extend_from_slice(&h.fingerprint.to_be_bytes());
    out.extend_from_slice(&h.sequence.to_be_bytes());
    out.extend_from_slice(&h.send_time_us.to_be_bytes());
    out.push(h.channel.len() as u8);
    out.extend_from_slice(h.channel.as_bytes());
}

pub fn encode_short(header: &EnvelopeHeader, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + ENVELOPE_HEADER_LEN + header.channel.len() + payload.len());
    out.extend_from_slice(SHORT_MAGIC);
    put_header(&mut out, header);
    out.extend_from_slice(payload);
    out
}

/// Payload bytes carried by each fragment for a channel of `channel_len`.
pub fn fragment_capacity(max_datagram: usize, channel_len: usize) -> usize {
    max_datagram.saturating_sub(FRAG_PREFIX_LEN + ENVELOPE_HEADER_LEN + channel_len)
}

/// Splits an envelope into datagrams no larger than `max_datagram`: one
/// SHORT packet when it fits, FRAG packets otherwise.
pub fn encode_datagrams(header: &EnvelopeHeader, payload: &[u8], max_datagram: usize, message_id: u64) -> Vec<Vec<u8>> {
    if 4 + ENVELOPE_HEADER_LEN + header.channel.len() + payload.len() <= max_datagram {
        return vec![encode_short(header, payload)];
    }
    let f = fragment_capacity(max_datagram, header.channel.len()).max(1);
    let count = payload.len().div_ceil(f);
    payload
        .chunks(f)
        .enumerate()
        .map(|(i, chunk)| {
            let mut out = Vec::with_capacity(max_datagram);
            out.extend_from_slice(FRAG_MAGIC);
            out.extend_from_slice(&message_id.to_be_bytes());
            out.extend_from_slice(&(i as u32).to_be_bytes());
            out.extend_from_slice(&(count as u32).to_be_bytes());
            if i == 0 {
                put_header(&mut out, header);
            }
            out.extend_from_slice(chunk);
            out
        })
        .collect()
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.buf.len() < n {
            return None;
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Some(head)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn header(&mut self) -> Option<EnvelopeHeader> {
        let fingerprint = self.u64()?;
        let sequence = self.u64()?;
        let send_time_us = self.u64()?;
        let len = self.take(1)?[0] as usize;
        let channel = std::str::from_utf8(self.take(len)?).ok()?.to_string();
        Some(EnvelopeHeader {
            fingerprint,
            sequence,
            send_time_us,
            channel,
        })
    }
}

/// `None` for anything that is not a well-formed packet.
pub fn parse(datagram: &[u8]) -> Option<Packet<'_>> {
    let mut r = Reader { buf: datagram };
    match r.take(4)? {
        m if m == SHORT_MAGIC => {
            let header = r.header()?;
            Some(Packet::Short { header, payload: r.buf })
        }
        m if m == FRAG_MAGIC => {
            let message_id = r.u64()?;
            let index = r.u32()?;
            let count = r.u32()?;
            if count == 0 || index >= count {
                return None;
            }
            let header = if index == 0 { Some(r.header()?) } else { None };
            Some(Packet::Frag {
                message_id,
                index,
                count,
                header,
                payload: r.buf,
            })
        }
        _ => None,
    }
}
