//! Byte format of session messages.
//!
//! ```text
//! kind: u8 | sequence: u32 BE | payload length: u32 BE | payload
//! ```
//!
//! Multi-byte payload fields are big-endian. `RevealValues` carries packed
//! IEEE-754 `f64` pairs and `PaSeed` exactly 32 bytes.

use thiserror::Error;

pub const HEADER_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    SyncAnnounce = 1,
    RevealIndices = 2,
    RevealValues = 3,
    EstimateAck = 4,
    ReconcileBlock = 5,
    PaSeed = 6,
    KeyConfirm = 7,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        MessageKind::SyncAnnounce,
        MessageKind::RevealIndices,
        MessageKind::RevealValues,
        MessageKind::EstimateAck,
        MessageKind::ReconcileBlock,
        MessageKind::PaSeed,
        MessageKind::KeyConfirm,
    ];
}

impl TryFrom<u8> for MessageKind {
    type Error = WireError;

    fn try_from(b: u8) -> Result<Self, WireError> {
        MessageKind::ALL
            .into_iter()
            .find(|k| *k as u8 == b)
            .ok_or(WireError::UnknownKind(b))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated message: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("bad {kind:?} payload: {reason}")]
    BadPayload { kind: MessageKind, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionMessage {
    pub kind: MessageKind,
    pub seq: u32,
    pub payload: Vec<u8>,
}

impl SessionMessage {
    pub fn new(kind: MessageKind, seq: u32, payload: Vec<u8>) -> Self {
        Self { kind, seq, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one message from the front of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn parse_prefix(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated {
                needed: HEADER_LEN,
                have: bytes.len(),
            });
        }
        let kind = MessageKind::try_from(bytes[0])?;
        let seq = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
        let len = u32::from_be_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let end = HEADER_LEN + len;
        if bytes.len() < end {
            return Err(WireError::Truncated {
                needed: end,
                have: bytes.len(),
            });
        }
        Ok((Self::new(kind, seq, bytes[HEADER_LEN..end].to_vec()), end))
    }

    /// Parses exactly one message.
    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        let (msg, used) = Self::parse_prefix(bytes)?;
        if used != bytes.len() {
            return Err(WireError::TrailingBytes(bytes.len() - used));
        }
        Ok(msg)
    }
}

fn bad(kind: MessageKind, reason: &'static str) -> WireError {
    WireError::BadPayload { kind, reason }
}

struct Reader<'a> {
    kind: MessageKind,
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        if self.bytes.len() < N {
            return Err(bad(self.kind, "too short"));
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().unwrap())
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        self.take::<8>().map(u64::from_be_bytes)
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        self.take::<8>().map(f64::from_be_bytes)
    }

    fn finish(self) -> Result<(), WireError> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(bad(self.kind, "too long"))
        }
    }
}

pub fn encode_values(values: &[(f64, f64)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 16);
    for (a, b) in values {
        out.extend_from_slice(&a.to_be_bytes());
        out.extend_from_slice(&b.to_be_bytes());
    }
    out
}

pub fn decode_values(payload: &[u8]) -> Result<Vec<(f64, f64)>, WireError> {
    if payload.len() % 16 != 0 {
        return Err(bad(MessageKind::RevealValues, "length not a multiple of 16"));
    }
    Ok(payload
        .chunks_exact(16)
        .map(|c| {
            (
                f64::from_be_bytes(c[..8].try_into().unwrap()),
                f64::from_be_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}

pub fn encode_indices(indices: &[u64]) -> Vec<u8> {
    indices.iter().flat_map(|i| i.to_be_bytes()).collect()
}

pub fn decode_indices(payload: &[u8]) -> Result<Vec<u64>, WireError> {
    if payload.len() % 8 != 0 {
        return Err(bad(MessageKind::RevealIndices, "length not a multiple of 8"));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| u64::from_be_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn decode_seed(payload: &[u8]) -> Result<[u8; 32], WireError> {
    payload.try_into().map_err(|_| bad(MessageKind::PaSeed, "seed must be 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncAnnounce {
    pub block_index: u64,
    pub frame_offset: u64,
}

impl SyncAnnounce {
    pub fn encode(&self) -> Vec<u8> {
        encode_indices(&[self.block_index, self.frame_offset])
    }

    pub fn decode(payload: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader {
            kind: MessageKind::SyncAnnounce,
            bytes: payload,
        };
        let out = Self {
            block_index: r.u64()?,
            frame_offset: r.u64()?,
        };
        r.finish()?;
        Ok(out)
    }
}

/// Bob's verdict after parameter estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateAck {
    pub proceed: bool,
    pub t_hat: f64,
    pub xi_hat: f64,
    pub t_lo: f64,
    pub xi_hi: f64,
    pub n_used: u64,
    /// Final key length, bits.
    pub key_len: u64,
    /// σ of the binning applied to key quadratures.
    pub bin_sigma: f64,
}

impl EstimateAck {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![u8::from(self.proceed)];
        for v in [self.t_hat, self.xi_hat, self.t_lo, self.xi_hi] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.n_used.to_be_bytes());
        out.extend_from_slice(&self.key_len.to_be_bytes());
        out.extend_from_slice(&self.bin_sigma.to_be_bytes());
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader {
            kind: MessageKind::EstimateAck,
            bytes: payload,
        };
        let proceed = match r.take::<1>()?[0] {
            0 => false,
            1 => true,
            _ => return Err(bad(MessageKind::EstimateAck, "proceed flag must be 0 or 1")),
        };
        let out = Self {
            proceed,
            t_hat: r.f64()?,
            xi_hat: r.f64()?,
            t_lo: r.f64()?,
            xi_hi: r.f64()?,
            n_used: r.u64()?,
            key_len: r.u64()?,
            bin_sigma: r.f64()?,
        };
        r.finish()?;
        Ok(out)
    }
}

/// Length and SHA-256 digest of a bit string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Digest {
    pub len: u64,
    pub sha256: [u8; 32],
}

impl Digest {
    pub fn of_bits(bits: &[bool]) -> Self {
        use sha2::{Digest as _, Sha256};
        let mut h = Sha256::new();
        h.update((bits.len() as u64).to_be_bytes());
        h.update(super::privacy::pack_bits(bits));
        Self {
            len: bits.len() as u64,
            sha256: h.finalize().into(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.len.to_be_bytes().to_vec();
        out.extend_from_slice(&self.sha256);
        out
    }

    pub fn decode(kind: MessageKind, payload: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader { kind, bytes: payload };
        let out = Self {
            len: r.u64()?,
            sha256: r.take::<32>()?,
        };
        r.finish()?;
        Ok(out)
    }
}
