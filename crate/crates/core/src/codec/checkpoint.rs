//! Resumable training checkpoints: a regular packet followed by a
//! training-only section holding optimizer state.
//!
//! ```text
//! <packet> | "PRTS" | epoch u32 | step u64 | optimizer u8 | buffers u8 |
//! (len u32 | len x f32)* | crc32 u32
//! ```

use super::{push_f32s, PrancPacket, Reader};
use crate::error::{PrancError, Result};

pub const SECTION_MAGIC: &[u8; 4] = b"PRTS";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSection {
    pub epoch: u32,
    pub step: u64,
    pub optimizer: u8,
    pub buffers: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub packet: PrancPacket,
    pub training: TrainingSection,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.packet.to_bytes();
        let start = out.len();
        out.extend_from_slice(SECTION_MAGIC);
        out.extend_from_slice(&self.training.epoch.to_le_bytes());
        out.extend_from_slice(&self.training.step.to_le_bytes());
        out.push(self.training.optimizer);
        out.push(self.training.buffers.len() as u8);
        for buf in &self.training.buffers {
            out.extend_from_slice(&(buf.len() as u32).to_le_bytes());
            push_f32s(&mut out, buf);
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (packet, used) = PrancPacket::read_prefix(bytes)?;
        let mut r = Reader { bytes, pos: used };
        let magic = r.take(4)?;
        if magic != SECTION_MAGIC {
            return Err(PrancError::BadMagic {
                expected: SECTION_MAGIC.to_vec(),
                found: magic.to_vec(),
            });
        }
        let epoch = r.u32()?;
        let step = r.u64()?;
        let optimizer = r.take(1)?[0];
        let count = r.take(1)?[0] as usize;
        let mut buffers = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            buffers.push(r.f32s(len)?);
        }
        let body_end = r.pos;
        let stored = r.u32()?;
        let computed = crc32fast::hash(&bytes[used..body_end]);
        if stored != computed {
            return Err(PrancError::Checksum { stored, computed });
        }
        if r.pos != bytes.len() {
            return Err(PrancError::DataFormat("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            packet,
            training: TrainingSection {
                epoch,
                step,
                optimizer,
                buffers,
            },
        })
    }
}
