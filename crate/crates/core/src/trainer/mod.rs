//! Training in coefficient space.
//!
//! theta is kept materialized as `theta0 + sum_j alpha_j * basis_j`. Each
//! mini-batch backpropagates to `dL/dtheta`, projects it onto the selected
//! basis models (`dL/dalpha_j = <dL/dtheta, basis_j>`), steps the optimizer on
//! those coordinates and folds the change back into theta incrementally. A
//! periodic full rebuild removes accumulated rounding drift.

mod optim;

use std::ops::Range;

pub use optim::{OptimizerKind, OptimizerState};
pub use crate::reconstruct::parallel_partial_sums;

use crate::basis::{chunk_ranges, fill_basis, splitmix64_at, BasisSpec, ParameterSchema, StreamConfig, Xoshiro256StarStar};
use crate::codec::{Checkpoint, PrancPacket, TrainingSection};
use crate::data::Dataset;
use crate::error::{PrancError, Result};
use crate::nn::{cross_entropy, Mode, Model, Scalar};
use crate::reconstruct::reconstruct_full;

const ALPHA_STREAM_TAG: u64 = 0xa1fa_a1fa_a1fa_a1fa;
const SHUFFLE_STREAM_TAG: u64 = 0x5bf1_e5bf_1e5b_f1e5;
const ITERATION_STREAM_TAG: u64 = 0x17e5_17e5_17e5_17e5;

/// Piecewise-constant learning rate: `base` for the first `drop_frac` of
/// the epochs, `base * drop_factor` afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub drop_frac: f64,
    pub drop_factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 1e-3,
            drop_frac: 0.8,
            drop_factor: 0.1,
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            base: lr,
            drop_frac: 1.0,
            drop_factor: 1.0,
        }
    }

    pub fn lr_at(&self, epoch: usize, total: usize) -> f64 {
        let boundary = (self.drop_frac * total as f64).round() as usize;
        if epoch < boundary {
            self.base
        } else {
            self.base * self.drop_factor
        }
    }
}

/// When the coordinate subset is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    PerEpoch,
    PerIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: LrSchedule,
    /// Coefficients updated per epoch (or per iteration); clamped to k.
    pub m: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub subset_seed: u64,
    pub resample: Resample,
    /// Full rebuild of theta every this many epochs; 0 disables.
    pub rebuild_every: usize,
    pub stream: StreamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: LrSchedule::default(),
            m: 500,
            batch_size: 128,
            optimizer: OptimizerKind::default(),
            subset_seed: 0,
            resample: Resample::PerEpoch,
            rebuild_every: 50,
            stream: StreamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(PrancError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.m == 0 || self.m > k {
            return Err(PrancError::InvalidConfig(format!("m = {} must be in 1..={k}", self.m)));
        }
        if self.batch_size == 0 {
            return Err(PrancError::InvalidConfig("batch size must be positive".into()));
        }
        if !self.lr.base.is_finite() || self.lr.base < 0.0 {
            return Err(PrancError::InvalidConfig("learning rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub spec: BasisSpec,
    pub alpha: Vec<f32>,
    /// Materialized `theta0 + sum_j alpha_j * basis_j`.
    pub theta: Vec<f32>,
    pub bn_stats: Vec<f32>,
    pub optimizer: OptimizerState,
    pub epoch: usize,
    pub step: u64,
}

/// `alpha_j ~ Uniform(-1/sqrt(k), 1/sqrt(k))` from a stream reserved for
/// coefficient initialization.
pub fn initial_alpha(spec: &BasisSpec) -> Vec<f32> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(splitmix64_at(spec.master_seed() ^ ALPHA_STREAM_TAG, 0));
    let bound = 1.0 / (spec.k() as f64).sqrt();
    (0..spec.k())
        .map(|_| ((2.0 * rng.next_unit() - 1.0) * bound) as f32)
        .collect()
}

pub fn init_state(spec: &BasisSpec, model: &Model, config: &TrainConfig) -> Result<TrainState> {
    init_state_with_alpha(spec, model, config, initial_alpha(spec))
}

/// [`init_state`] with caller-chosen coefficients.
pub fn init_state_with_alpha(spec: &BasisSpec, model: &Model, config: &TrainConfig, alpha: Vec<f32>) -> Result<TrainState> {
    let theta = reconstruct_full(spec, model.schema(), &alpha, &config.stream)?;
    Ok(TrainState {
        spec: *spec,
        alpha,
        theta,
        bn_stats: model.initial_stats(),
        optimizer: OptimizerState::new(config.optimizer, spec.k()),
        epoch: 0,
        step: 0,
    })
}

/// `dL/dalpha_j = <grad, basis_j>` for every `j` in `subset`, streaming each
/// basis model chunk by chunk and accumulating in f64 in ascending index.
pub fn project_gradient<T: Scalar>(
    grad: &[T],
    spec: &BasisSpec,
    schema: &ParameterSchema,
    subset: &[usize],
    stream: &StreamConfig,
) -> Result<Vec<f64>> {
    if grad.len() != schema.d() {
        return Err(PrancError::LengthMismatch {
            what: "theta gradient",
            expected: schema.d(),
            actual: grad.len(),
        });
    }
    let d = schema.d();
    stream.exec.try_map(subset, |&j| {
        let seed = spec.derive_basis_seed(j)?;
        let mut buf = vec![0.0f32; stream.chunk.min(d)];
        let mut acc = 0.0f64;
        for r in chunk_ranges(0..d, stream.chunk) {
            let basis = &mut buf[..r.len()];
            fill_basis(seed, schema, r.clone(), basis);
            for (g, &b) in grad[r].iter().zip(basis.iter()) {
                acc += g.to_f64() * b as f64;
            }
        }
        Ok(acc)
    })
}

/// Adds `delta[i]` to `alpha[subset[i]]` and the matching
/// `delta * basis` to theta, chunk by chunk in f64.
pub fn apply_update(state: &mut TrainState, schema: &ParameterSchema, subset: &[usize], delta: &[f32], stream: &StreamConfig) -> Result<()> {
    if subset.len() != delta.len() {
        return Err(PrancError::LengthMismatch {
            what: "coefficient update",
            expected: subset.len(),
            actual: delta.len(),
        });
    }
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(PrancError::NonFinite("coefficient update"));
    }
    let mut terms = Vec::with_capacity(subset.len());
    for (&j, &dj) in subset.iter().zip(delta) {
        let seed = state.spec.derive_basis_seed(j)?;
        let old = state.alpha[j];
        let new = old + dj;
        state.alpha[j] = new;
        let change = new as f64 - old as f64;
        if change != 0.0 {
            terms.push((seed, change));
        }
    }
    if terms.is_empty() {
        return Ok(());
    }
    let chunk = stream.chunk;
    stream.exec.for_each_chunk_mut(&mut state.theta, chunk, |ci, dst| {
        let lo = ci * chunk;
        let r: Range<usize> = lo..lo + dst.len();
        let mut basis = vec![0.0f32; dst.len()];
        let mut acc: Vec<f64> = dst.iter().map(|&v| v as f64).collect();
        for &(seed, change) in &terms {
            fill_basis(seed, schema, r.clone(), &mut basis);
            for (a, &b) in acc.iter_mut().zip(&basis) {
                *a += change * b as f64;
            }
        }
        for (o, a) in dst.iter_mut().zip(acc) {
            *o = a as f32;
        }
    });
    Ok(())
}

/// `m` distinct indices from `0..k`, uniformly without replacement, sorted.
pub fn sample_subset(k: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..k).collect();
    let m = m.min(k);
    for i in 0..m {
        let j = i + rng.below((k - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool.sort_unstable();
    pool
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        idx.swap(i, j);
    }
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    /// Mean mini-batch loss over the epoch.
    pub loss: f64,
}

/// One pass over `data`: redraw the coordinate subset, then for every
/// mini-batch run forward/backward, project, step and fold into theta.
pub fn train_epoch(model: &Model, state: &mut TrainState, data: &Dataset, config: &TrainConfig) -> Result<EpochReport> {
    if data.is_empty() {
        return Err(PrancError::EmptyData("training set"));
    }
    let k = state.spec.k();
    config.validate(k)?;
    let schema = model.schema();
    let epoch = state.epoch;
    let lr = config.lr.lr_at(epoch, config.epochs);
    let m = config.m.min(k);
    let mut subset = sample_subset(k, m, splitmix64_at(config.subset_seed, epoch as u64));
    let order = shuffled(data.len(), splitmix64_at(config.subset_seed ^ SHUFFLE_STREAM_TAG, epoch as u64));
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for idx in order.chunks(config.batch_size) {
        if config.resample == Resample::PerIteration {
            subset = sample_subset(k, m, splitmix64_at(config.subset_seed ^ ITERATION_STREAM_TAG, state.step));
        }
        let x = data.inputs.select(idx);
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        let (logits, cache) = model.forward(&state.theta, &mut state.bn_stats, &x, Mode::Train)?;
        let (loss, dlogits) = cross_entropy(&logits, &labels)?;
        if !loss.is_finite() {
            return Err(PrancError::NonFinite("training loss"));
        }
        let grad = model.backward(&state.theta, cache, &dlogits)?;
        let galpha = project_gradient(&grad, &state.spec, schema, &subset, &config.stream)?;
        let delta = state.optimizer.step(&subset, &galpha, lr);
        apply_update(state, schema, &subset, &delta, &config.stream)?;
        state.step += 1;
        loss_sum += loss;
        batches += 1;
    }
    state.epoch += 1;
    if config.rebuild_every > 0 && state.epoch.is_multiple_of(config.rebuild_every) {
        rebuild(state, schema, &config.stream)?;
    }
    Ok(EpochReport {
        epoch,
        lr,
        loss: loss_sum / batches as f64,
    })
}

/// Replaces the incrementally maintained theta by a fresh reconstruction.
pub fn rebuild(state: &mut TrainState, schema: &ParameterSchema, stream: &StreamConfig) -> Result<()> {
    state.theta = reconstruct_full(&state.spec, schema, &state.alpha, stream)?;
    Ok(())
}

/// Runs epochs until `config.epochs` is reached, calling `on_epoch` after
/// each. Resumed states continue from their epoch counter.
pub fn train(
    model: &Model,
    state: &mut TrainState,
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport, &TrainState),
) -> Result<()> {
    config.validate(state.spec.k())?;
    while state.epoch < config.epochs {
        let report = train_epoch(model, state, data, config)?;
        on_epoch(&report, state);
    }
    Ok(())
}

impl TrainState {
    pub fn packet(&self, schema: &ParameterSchema) -> PrancPacket {
        PrancPacket {
            fingerprint: schema.fingerprint(),
            master_seed: Some(self.spec.master_seed()),
            alpha: self.alpha.clone(),
            bn_stats: self.bn_stats.clone(),
        }
    }

    pub fn checkpoint(&self, schema: &ParameterSchema) -> Checkpoint {
        Checkpoint {
            packet: self.packet(schema),
            training: TrainingSection {
                epoch: self.epoch as u32,
                step: self.step,
                optimizer: self.optimizer.kind().tag(),
                buffers: self.optimizer.buffers().to_vec(),
            },
        }
    }

    /// Restores a state from a checkpoint; theta is rebuilt from alpha.
    pub fn resume(checkpoint: Checkpoint, model: &Model, config: &TrainConfig, seed_override: Option<u64>) -> Result<Self> {
        let packet = checkpoint.packet;
        packet.check_schema(model.schema())?;
        if checkpoint.training.optimizer != config.optimizer.tag() {
            return Err(PrancError::InvalidConfig("checkpoint optimizer differs from configuration".into()));
        }
        let spec = packet.basis_spec(seed_override)?;
        let theta = reconstruct_full(&spec, model.schema(), &packet.alpha, &config.stream)?;
        Ok(Self {
            spec,
            optimizer: OptimizerState::from_buffers(config.optimizer, spec.k(), checkpoint.training.buffers)?,
            alpha: packet.alpha,
            theta,
            bn_stats: packet.bn_stats,
            epoch: checkpoint.training.epoch as usize,
            step: checkpoint.training.step,
        })
    }
}

#[cfg(test)]
mod tests;
