//! Rebuilding theta from `(master seed, alpha)`.
//!
//! All paths (full, sliced, partial, worker-split, on-demand) go through the
//! same fixed-point accumulation in [`accum`], so they agree bit for bit.

mod accum;
mod on_demand;

use std::ops::Range;

pub use accum::MixScale;
pub use on_demand::{infer_on_demand, OnDemandReport, OnDemandSource};

use crate::basis::{chunk_ranges, fill_basis, BasisSpec, ParameterSchema, StreamConfig};
use crate::error::{check_range, PrancError, Result};

fn check_alpha(spec: &BasisSpec, alpha: &[f32]) -> Result<()> {
    if alpha.len() != spec.k() {
        return Err(PrancError::LengthMismatch {
            what: "alpha",
            expected: spec.k(),
            actual: alpha.len(),
        });
    }
    Ok(())
}

/// Mixes the bases listed in `indices` over `range` into `out`, adding the
/// prior. `indices` may be any subset or order of `0..k`.
pub(crate) fn mix_range(
    spec: &BasisSpec,
    schema: &ParameterSchema,
    scale: &MixScale,
    indices: &[usize],
    range: Range<usize>,
    out: &mut [f32],
    stream: &StreamConfig,
) -> Result<()> {
    let seeds = indices
        .iter()
        .map(|&j| spec.derive_basis_seed(j).map(|s| (j, s)))
        .collect::<Result<Vec<_>>>()?;
    let start = range.start;
    let chunk = stream.chunk;
    stream.exec.for_each_chunk_mut(out, chunk, |ci, dst| {
        let lo = start + ci * chunk;
        let r = lo..lo + dst.len();
        let mut basis = vec![0.0f32; dst.len()];
        let mut acc = vec![0i128; dst.len()];
        for &(j, seed) in &seeds {
            if scale.is_zero(j) {
                continue;
            }
            fill_basis(seed, schema, r.clone(), &mut basis);
            scale.accumulate(j, &basis, &mut acc);
        }
        schema.prior_into(r, dst);
        for (o, &a) in dst.iter_mut().zip(&acc) {
            *o = scale.finish(a, *o);
        }
    });
    Ok(())
}

/// theta = theta0 + sum_j alpha_j * basis_j over the whole schema.
pub fn reconstruct_full(
    spec: &BasisSpec,
    schema: &ParameterSchema,
    alpha: &[f32],
    stream: &StreamConfig,
) -> Result<Vec<f32>> {
    reconstruct_slice(spec, schema, alpha, 0..schema.d(), stream)
}

/// Entries `range` of [`reconstruct_full`], computed without touching the
/// rest of theta.
pub fn reconstruct_slice(
    spec: &BasisSpec,
    schema: &ParameterSchema,
    alpha: &[f32],
    range: Range<usize>,
    stream: &StreamConfig,
) -> Result<Vec<f32>> {
    check_alpha(spec, alpha)?;
    check_range(&range, schema.d())?;
    let scale = MixScale::new(alpha, schema)?;
    let all: Vec<usize> = (0..spec.k()).collect();
    let mut out = vec![0.0; range.len()];
    mix_range(spec, schema, &scale, &all, range, &mut out, stream)?;
    Ok(out)
}

/// Splits `0..k` into `workers` contiguous blocks, lets each worker sum its
/// block over the full schema, then combines the partial sums in ascending
/// worker order.
pub fn parallel_partial_sums(
    spec: &BasisSpec,
    schema: &ParameterSchema,
    alpha: &[f32],
    workers: usize,
    stream: &StreamConfig,
) -> Result<Vec<f32>> {
    check_alpha(spec, alpha)?;
    let k = spec.k();
    if workers == 0 || workers > k {
        return Err(PrancError::InvalidConfig(format!(
            "worker count {workers} must be in 1..={k}"
        )));
    }
    let scale = MixScale::new(alpha, schema)?;
    let d = schema.d();
    let blocks: Vec<Range<usize>> = (0..workers)
        .map(|w| (w * k / workers)..((w + 1) * k / workers))
        .collect();
    let partials = stream.exec.try_map(&blocks, |block| -> Result<Vec<i128>> {
        let mut acc = vec![0i128; d];
        let mut basis = vec![0.0f32; stream.chunk.min(d)];
        for j in block.clone() {
            if scale.is_zero(j) {
                continue;
            }
            let seed = spec.derive_basis_seed(j)?;
            for r in chunk_ranges(0..d, stream.chunk) {
                let buf = &mut basis[..r.len()];
                fill_basis(seed, schema, r.clone(), buf);
                scale.accumulate(j, buf, &mut acc[r]);
            }
        }
        Ok(acc)
    })?;
    let mut total = vec![0i128; d];
    for partial in &partials {
        for (t, &p) in total.iter_mut().zip(partial) {
            *t += p;
        }
    }
    let mut theta = schema.prior_vector();
    for (o, &t) in theta.iter_mut().zip(&total) {
        *o = scale.finish(t, *o);
    }
    Ok(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Basis index order `0, 1, ..., k-1`.
    Natural,
    /// Descending `|alpha_j|`, ties broken by lower index.
    SortedByAbsAlphaDesc,
}

impl Ordering {
    pub fn permutation(self, alpha: &[f32]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..alpha.len()).collect();
        if self == Ordering::SortedByAbsAlphaDesc {
            idx.sort_by(|&a, &b| {
                alpha[b]
                    .abs()
                    .total_cmp(&alpha[a].abs())
                    .then(a.cmp(&b))
            });
        }
        idx
    }

    pub fn name(self) -> &'static str {
        match self {
            Ordering::Natural => "natural",
            Ordering::SortedByAbsAlphaDesc => "sorted",
        }
    }
}

impl std::str::FromStr for Ordering {
    type Err = PrancError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" | "random" => Ok(Ordering::Natural),
            "sorted" | "sorted_by_abs_alpha_desc" => Ok(Ordering::SortedByAbsAlphaDesc),
            other => Err(PrancError::InvalidConfig(format!("unknown ordering {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReconstructionPlan {
    pub ordering: Ordering,
    pub prefix: usize,
    pub stream: StreamConfig,
}

/// theta from only the first `plan.prefix` bases under `plan.ordering`.
///
/// The fixed-point scale is taken from the full alpha vector, so
/// `prefix == k` reproduces [`reconstruct_full`] exactly for every ordering.
pub fn partial_reconstruct(
    spec: &BasisSpec,
    schema: &ParameterSchema,
    alpha: &[f32],
    plan: &ReconstructionPlan,
) -> Result<Vec<f32>> {
    check_alpha(spec, alpha)?;
    if plan.prefix > spec.k() {
        return Err(PrancError::InvalidConfig(format!(
            "prefix {} exceeds k = {}",
            plan.prefix,
            spec.k()
        )));
    }
    let scale = MixScale::new(alpha, schema)?;
    let order = plan.ordering.permutation(alpha);
    let mut out = vec![0.0; schema.d()];
    mix_range(
        spec,
        schema,
        &scale,
        &order[..plan.prefix],
        0..schema.d(),
        &mut out,
        &plan.stream,
    )?;
    Ok(out)
}

/// Equal-width histogram of alpha over the symmetric range
/// `[-max|alpha|, max|alpha|]` (or `[-1, 1]` when alpha is all zero).
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl AlphaHistogram {
    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + w * bin as f64, self.lo + w * (bin + 1) as f64)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn alpha_histogram(alpha: &[f32], bins: usize) -> Result<AlphaHistogram> {
    if bins == 0 {
        return Err(PrancError::InvalidConfig("histogram needs at least one bin".into()));
    }
    let mut m = 0.0f64;
    for &a in alpha {
        if !a.is_finite() {
            return Err(PrancError::NonFinite("alpha"));
        }
        m = m.max((a as f64).abs());
    }
    if m == 0.0 {
        m = 1.0;
    }
    let (lo, hi) = (-m, m);
    let mut counts = vec![0usize; bins];
    for &a in alpha {
        let t = (a as f64 - lo) / (hi - lo) * bins as f64;
        let bin = (t as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(AlphaHistogram { lo, hi, counts })
}
