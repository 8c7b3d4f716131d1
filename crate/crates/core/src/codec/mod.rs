//! The `.pranc` wire format and communication-cost accounting.
//!
//! Little-endian layout:
//!
//! ```text
//! "PRNC" | version u16 | fingerprint u64 | master_seed u64 | k u32 |
//! alpha k x f32 | bn_len u32 | bn bn_len x f32 | crc32 u32
//! ```
//!
//! The CRC (IEEE) covers every preceding byte. A packet written with a
//! detached seed sets bit 15 of the version and omits the seed field.

mod budget;
mod checkpoint;

pub use budget::{estimate_transfer, group_thousands, param_budget, ParamBudget};
pub use checkpoint::{Checkpoint, TrainingSection};

use crate::basis::{BasisSpec, ParameterSchema};
use crate::error::{PrancError, Result};

pub const MAGIC: &[u8; 4] = b"PRNC";
pub const FORMAT_VERSION: u16 = 1;
pub const DETACHED_SEED_FLAG: u16 = 0x8000;
pub const FILE_EXTENSION: &str = "pranc";

/// Bytes of a packet with no coefficients and no batchnorm statistics.
pub const EMPTY_PACKET_LEN: usize = 4 + 2 + 8 + 8 + 4 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PrancPacket {
    pub fingerprint: u64,
    /// `None` for packets written in detached-seed mode.
    pub master_seed: Option<u64>,
    pub alpha: Vec<f32>,
    pub bn_stats: Vec<f32>,
}

/// Serialized size for `k` coefficients and `bn` running statistics.
pub fn packet_len(k: usize, bn: usize, detached_seed: bool) -> usize {
    EMPTY_PACKET_LEN + 4 * (k + bn) - if detached_seed { 8 } else { 0 }
}

/// Serializes a trained model. Fails if alpha or the statistics do not
/// match the basis family and schema.
pub fn pack(spec: &BasisSpec, schema: &ParameterSchema, alpha: &[f32], bn_stats: &[f32]) -> Result<Vec<u8>> {
    if alpha.len() != spec.k() {
        return Err(PrancError::LengthMismatch {
            what: "alpha",
            expected: spec.k(),
            actual: alpha.len(),
        });
    }
    if bn_stats.len() != schema.bn_total() {
        return Err(PrancError::LengthMismatch {
            what: "batchnorm statistics",
            expected: schema.bn_total(),
            actual: bn_stats.len(),
        });
    }
    Ok(PrancPacket {
        fingerprint: schema.fingerprint(),
        master_seed: Some(spec.master_seed()),
        alpha: alpha.to_vec(),
        bn_stats: bn_stats.to_vec(),
    }
    .to_bytes())
}

/// Parses and checksums a packet. The whole input must be one packet.
pub fn unpack(bytes: &[u8]) -> Result<PrancPacket> {
    let (packet, used) = PrancPacket::read_prefix(bytes)?;
    if used != bytes.len() {
        return Err(PrancError::DataFormat(format!(
            "{} trailing bytes after packet",
            bytes.len() - used
        )));
    }
    Ok(packet)
}

/// [`unpack`] plus the check that the packet was produced for `schema`.
pub fn unpack_for(bytes: &[u8], schema: &ParameterSchema) -> Result<PrancPacket> {
    let packet = unpack(bytes)?;
    packet.check_schema(schema)?;
    Ok(packet)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(PrancError::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or(PrancError::Truncated {
            needed: usize::MAX,
            available: self.bytes.len(),
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl PrancPacket {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn version(&self) -> u16 {
        if self.master_seed.is_some() {
            FORMAT_VERSION
        } else {
            FORMAT_VERSION | DETACHED_SEED_FLAG
        }
    }

    /// Drops the seed so it can travel out of band.
    pub fn detached(mut self) -> Self {
        self.master_seed = None;
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(packet_len(self.k(), self.bn_stats.len(), self.master_seed.is_none()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version().to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        if let Some(seed) = self.master_seed {
            out.extend_from_slice(&seed.to_le_bytes());
        }
        out.extend_from_slice(&(self.alpha.len() as u32).to_le_bytes());
        push_f32s(&mut out, &self.alpha);
        out.extend_from_slice(&(self.bn_stats.len() as u32).to_le_bytes());
        push_f32s(&mut out, &self.bn_stats);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses one packet from the front of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn read_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(PrancError::BadMagic {
                expected: MAGIC.to_vec(),
                found: magic.to_vec(),
            });
        }
        let version = r.u16()?;
        let detached = match version {
            FORMAT_VERSION => false,
            v if v == FORMAT_VERSION | DETACHED_SEED_FLAG => true,
            other => return Err(PrancError::UnsupportedVersion(other)),
        };
        let fingerprint = r.u64()?;
        let master_seed = if detached { None } else { Some(r.u64()?) };
        let k = r.u32()? as usize;
        let alpha = r.f32s(k)?;
        let bn_len = r.u32()? as usize;
        let bn_stats = r.f32s(bn_len)?;
        let body_end = r.pos;
        let stored = r.u32()?;
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(PrancError::Checksum { stored, computed });
        }
        Ok((
            Self {
                fingerprint,
                master_seed,
                alpha,
                bn_stats,
            },
            r.pos,
        ))
    }

    pub fn check_schema(&self, schema: &ParameterSchema) -> Result<()> {
        if self.fingerprint != schema.fingerprint() {
            return Err(PrancError::FingerprintMismatch {
                packet: self.fingerprint,
                local: schema.fingerprint(),
            });
        }
        if self.bn_stats.len() != schema.bn_total() {
            return Err(PrancError::LengthMismatch {
                what: "batchnorm statistics",
                expected: schema.bn_total(),
                actual: self.bn_stats.len(),
            });
        }
        Ok(())
    }

    /// The basis family this packet mixes, using `seed_override` when given
    /// (required for detached-seed packets).
    pub fn basis_spec(&self, seed_override: Option<u64>) -> Result<BasisSpec> {
        let seed = seed_override.or(self.master_seed).ok_or(PrancError::MissingSeed)?;
        BasisSpec::new(seed, self.k())
    }
}
