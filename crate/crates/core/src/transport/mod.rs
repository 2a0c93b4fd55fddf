//! Packet codec, the worker/switch/master reliability protocol, and a
//! seeded lossy-channel simulator.
//!
//! Entry identifiers double as packet sequence numbers. The switch keeps,
//! per flow, the highest sequence it processed: the next-in-order packet is
//! processed (and ACKed by the switch if pruned), replays are forwarded
//! unprocessed for the master to ACK, and out-of-order futures are dropped
//! until the gap retransmits. Together with workers that retransmit
//! un-ACKed packets forever, every entry is eventually either ACKed as
//! pruned or delivered to the master — and the pruning algorithms tolerate
//! the overlap case where both happen.

use thiserror::Error;

mod channel;
mod endpoints;

pub use channel::{channel_run, ChannelConfig, ChannelError, ChannelTrace, LinkLoss, Workload};
pub use endpoints::{MasterState, SwitchAction, SwitchSeqState, WorkerRetxState};

/// Packet type. ACK and FIN carry no values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Data,
    Ack,
    Fin,
}

/// One wire record: `fid(2) seq(4) flags(1) n(1) values(8n)`, big-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub fid: u16,
    pub seq: u32,
    pub kind: PacketKind,
    pub values: Vec<u64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("buffer of {0} bytes is shorter than the 8-byte header")]
    TooShort(usize),
    #[error("unknown flags byte {0:#x}")]
    BadFlags(u8),
    #[error("value count {n} needs {expected} bytes, buffer has {found}")]
    LengthMismatch { n: u8, expected: usize, found: usize },
    #[error("{kind:?} packets carry no values, found n = {n}")]
    UnexpectedValues { kind: PacketKind, n: u8 },
    #[error("DATA packets carry at least one value")]
    EmptyData,
}

impl Packet {
    pub fn data(fid: u16, seq: u32, values: Vec<u64>) -> Packet {
        debug_assert!(!values.is_empty());
        Packet {
            fid,
            seq,
            kind: PacketKind::Data,
            values,
        }
    }

    pub fn ack(fid: u16, seq: u32) -> Packet {
        Packet {
            fid,
            seq,
            kind: PacketKind::Ack,
            values: Vec::new(),
        }
    }

    pub fn fin(fid: u16, seq: u32) -> Packet {
        Packet {
            fid,
            seq,
            kind: PacketKind::Fin,
            values: Vec::new(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        match self.kind {
            PacketKind::Data if self.values.is_empty() => return Err(CodecError::EmptyData),
            PacketKind::Ack | PacketKind::Fin if !self.values.is_empty() => {
                return Err(CodecError::UnexpectedValues {
                    kind: self.kind,
                    n: self.values.len() as u8,
                })
            }
            _ => {}
        }
        let mut out = Vec::with_capacity(8 + 8 * self.values.len());
        out.extend_from_slice(&self.fid.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.push(match self.kind {
            PacketKind::Data => 0,
            PacketKind::Ack => 1,
            PacketKind::Fin => 2,
        });
        out.push(self.values.len() as u8);
        for v in &self.values {
            out.extend_from_slice(&v.to_be_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Packet, CodecError> {
        if bytes.len() < 8 {
            return Err(CodecError::TooShort(bytes.len()));
        }
        let fid = u16::from_be_bytes([bytes[0], bytes[1]]);
        let seq = u32::from_be_bytes([bytes[2], bytes[3], bytes[4], bytes[5]]);
        let kind = match bytes[6] {
            0 => PacketKind::Data,
            1 => PacketKind::Ack,
            2 => PacketKind::Fin,
            other => return Err(CodecError::BadFlags(other)),
        };
        let n = bytes[7];
        let expected = 8 + 8 * n as usize;
        if bytes.len() != expected {
            return Err(CodecError::LengthMismatch {
                n,
                expected,
                found: bytes.len(),
            });
        }
        match kind {
            PacketKind::Ack | PacketKind::Fin if n != 0 => {
                return Err(CodecError::UnexpectedValues { kind, n })
            }
            PacketKind::Data if n == 0 => return Err(CodecError::EmptyData),
            _ => {}
        }
        let values = (0..n as usize)
            .map(|i| {
                let at = 8 + 8 * i;
                u64::from_be_bytes(bytes[at..at + 8].try_into().unwrap())
            })
            .collect();
        Ok(Packet {
            fid,
            seq,
            kind,
            values,
        })
    }
}
