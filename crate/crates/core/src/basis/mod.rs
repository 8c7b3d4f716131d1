//! Seeded pseudo-random basis models.
//!
//! A basis family is fully described by a master seed and a count `k`. Basis
//! model `j` gets its own 64-bit seed (the `j`-th splitmix64 output of the
//! master seed); within a model, flat index `i` lives in block `i / 4096`,
//! whose xoshiro256** stream is seeded by `basis_seed ^ block`. Any entry can
//! therefore be regenerated without replaying the rest of the family.

mod rng;
mod schema;

use std::ops::Range;

pub use rng::{splitmix64_at, splitmix64_next, unit_float_from_bits, Xoshiro256StarStar};
pub use schema::{fnv1a64, init_bound_for, BnStatSlot, ParameterSchema, Segment, SegmentKind};

use crate::error::{check_range, PrancError, Result};
use crate::exec::Exec;

/// Entries per re-seeded xoshiro block.
pub const STREAM_BLOCK: usize = 4096;

/// Default number of flat entries generated per streaming step.
pub const DEFAULT_CHUNK: usize = 16 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisSpec {
    master_seed: u64,
    k: usize,
}

impl BasisSpec {
    pub fn new(master_seed: u64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(PrancError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(Self { master_seed, k })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Same family size, different master seed.
    pub fn with_seed(&self, master_seed: u64) -> Self {
        Self { master_seed, ..*self }
    }

    pub fn derive_basis_seed(&self, j: usize) -> Result<u64> {
        if j >= self.k {
            return Err(PrancError::BasisIndex {
                index: j,
                k: self.k,
            });
        }
        Ok(splitmix64_at(self.master_seed, j as u64))
    }
}

/// Streaming knobs shared by every pass over the basis family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamConfig {
    pub chunk: usize,
    pub exec: Exec,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            chunk: DEFAULT_CHUNK,
            exec: Exec::default(),
        }
    }
}

impl StreamConfig {
    pub fn sequential() -> Self {
        Self {
            exec: Exec::Sequential,
            ..Self::default()
        }
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisChunk {
    pub basis_index: usize,
    pub range: Range<usize>,
    pub values: Vec<f32>,
}

/// Generates entries `range` of basis model `j`.
pub fn basis_chunk(
    spec: &BasisSpec,
    schema: &ParameterSchema,
    j: usize,
    range: Range<usize>,
) -> Result<BasisChunk> {
    let seed = spec.derive_basis_seed(j)?;
    check_range(&range, schema.d())?;
    let mut values = vec![0.0; range.len()];
    fill_basis(seed, schema, range.clone(), &mut values);
    Ok(BasisChunk {
        basis_index: j,
        range,
        values,
    })
}

/// Writes entries `range` of the basis model with seed `basis_seed` into
/// `out`. Callers guarantee `range` lies within the schema.
pub fn fill_basis(basis_seed: u64, schema: &ParameterSchema, range: Range<usize>, out: &mut [f32]) {
    debug_assert_eq!(out.len(), range.len());
    if range.is_empty() {
        return;
    }
    let segments = schema.segments();
    let mut seg_idx = schema.segment_index_at(range.start);
    let mut i = range.start;
    while i < range.end {
        let block = i / STREAM_BLOCK;
        let block_end = ((block + 1) * STREAM_BLOCK).min(range.end);
        let mut rng = Xoshiro256StarStar::seed_from_u64(basis_seed ^ block as u64);
        rng.skip(i - block * STREAM_BLOCK);
        while i < block_end {
            let seg = &segments[seg_idx];
            let seg_end = seg.offset + seg.len;
            let run_end = seg_end.min(block_end);
            let dst = &mut out[i - range.start..run_end - range.start];
            if seg.init_bound == 0.0 {
                dst.fill(0.0);
                if run_end < block_end {
                    rng.skip(dst.len());
                }
            } else {
                let b = seg.init_bound as f64;
                for v in dst.iter_mut() {
                    let u = rng.next_unit();
                    *v = ((2.0 * u - 1.0) * b) as f32;
                }
            }
            i = run_end;
            if i == seg_end {
                seg_idx += 1;
            }
        }
    }
}

/// Materializes basis model `j` over the whole schema. Test and oracle use.
pub fn basis_dense(spec: &BasisSpec, schema: &ParameterSchema, j: usize) -> Result<Vec<f32>> {
    Ok(basis_chunk(spec, schema, j, 0..schema.d())?.values)
}

/// Chunk ranges covering `range` with at most `chunk` entries each.
pub(crate) fn chunk_ranges(range: Range<usize>, chunk: usize) -> impl Iterator<Item = Range<usize>> {
    let chunk = chunk.max(1);
    (range.start..range.end)
        .step_by(chunk)
        .map(move |s| s..(s + chunk).min(range.end))
}
