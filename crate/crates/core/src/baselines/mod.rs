//! Reference points: ordinary full-parameter training, and least-squares
//! regression of a trained theta onto the span of the basis models.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::basis::{chunk_ranges, fill_basis, BasisSpec, ParameterSchema, StreamConfig, Xoshiro256StarStar, splitmix64_at};
use crate::data::Dataset;
use crate::error::{PrancError, Result};
use crate::nn::{cross_entropy, evaluate, Mode, Model};
use crate::reconstruct::reconstruct_full;
use crate::trainer::LrSchedule;

const SHUFFLE_TAG: u64 = 0xf011_f011_f011_f011;

/// Largest k accepted by [`regress_span_exact`].
pub const EXACT_MAX_K: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct FullTrainConfig {
    pub epochs: usize,
    pub lr: LrSchedule,
    pub batch_size: usize,
    pub momentum: f64,
    /// Seeds the initial theta: `theta0 + basis_0` of a one-model family.
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for FullTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: LrSchedule {
                base: 0.05,
                ..LrSchedule::default()
            },
            batch_size: 64,
            momentum: 0.9,
            init_seed: 0,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullTrainResult {
    pub theta: Vec<f32>,
    pub bn_stats: Vec<f32>,
    /// Mean mini-batch loss per epoch.
    pub losses: Vec<f64>,
}

/// Kaiming-uniform initialization for every weight, priors elsewhere.
pub fn full_init(schema: &ParameterSchema, init_seed: u64) -> Result<Vec<f32>> {
    reconstruct_full(&BasisSpec::new(init_seed, 1)?, schema, &[1.0], &StreamConfig::sequential())
}

/// Plain mini-batch SGD with momentum over all d parameters.
pub fn train_full(model: &Model, data: &Dataset, config: &FullTrainConfig) -> Result<FullTrainResult> {
    if data.is_empty() {
        return Err(PrancError::EmptyData("training set"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(PrancError::InvalidConfig("epochs and batch size must be positive".into()));
    }
    let mut theta = full_init(model.schema(), config.init_seed)?;
    let mut velocity = vec![0.0f64; theta.len()];
    let mut stats = model.initial_stats::<f32>();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.lr.lr_at(epoch, config.epochs);
        let mut rng = Xoshiro256StarStar::seed_from_u64(splitmix64_at(config.shuffle_seed ^ SHUFFLE_TAG, epoch as u64));
        let mut order: Vec<usize> = (0..data.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            let x = data.inputs.select(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (logits, cache) = model.forward(&theta, &mut stats, &x, Mode::Train)?;
            let (loss, dlogits) = cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(PrancError::NonFinite("training loss"));
            }
            let grad = model.backward(&theta, cache, &dlogits)?;
            for ((t, v), g) in theta.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v + *g as f64;
                *t = (*t as f64 - lr * *v) as f32;
            }
            total += loss;
            batches += 1;
        }
        losses.push(total / batches as f64);
    }
    Ok(FullTrainResult {
        theta,
        bn_stats: stats,
        losses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    pub max_iters: usize,
    /// Stop once an iteration improves the residual by less than this
    /// relative amount.
    pub rel_tol: f64,
    /// Step is `step_scale / L` with `L` the largest eigenvalue of the Gram
    /// matrix; values up to 2 converge.
    pub step_scale: f64,
    pub power_iters: usize,
    pub stream: StreamConfig,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-7,
            step_scale: 1.0,
            power_iters: 30,
            stream: StreamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub alpha: Vec<f32>,
    /// `||theta* - theta0 - sum_j alpha_j basis_j||_2` at the returned alpha.
    pub residual: f64,
    /// Residual before each iteration, then at the final iterate.
    pub history: Vec<f64>,
    pub lipschitz: f64,
}

struct SpanPass<'a> {
    spec: &'a BasisSpec,
    schema: &'a ParameterSchema,
    seeds: Vec<u64>,
    chunk: usize,
    stream: StreamConfig,
}

impl<'a> SpanPass<'a> {
    fn new(spec: &'a BasisSpec, schema: &'a ParameterSchema, stream: &StreamConfig) -> Result<Self> {
        let k = spec.k();
        let seeds = (0..k).map(|j| spec.derive_basis_seed(j)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            schema,
            seeds,
            chunk: stream.chunk.min((1 << 22) / k).max(1),
            stream: *stream,
        })
    }

    fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        chunk_ranges(0..self.schema.d(), self.chunk).collect()
    }

    fn fill(&self, r: &std::ops::Range<usize>, buf: &mut [f32]) {
        for (seed, row) in self.seeds.iter().zip(buf.chunks_mut(r.len())) {
            fill_basis(*seed, self.schema, r.clone(), row);
        }
    }

    /// `(B^T (B x - target), ||B x - target||^2)`; no target means zero.
    fn normal(&self, x: &[f64], target: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
        let k = self.spec.k();
        let parts = self.stream.exec.map(&self.ranges(), |r| {
            let mut buf = vec![0.0f32; k * r.len()];
            self.fill(r, &mut buf);
            let mut y: Vec<f64> = match target {
                Some(t) => t[r.clone()].iter().map(|v| -v).collect(),
                None => vec![0.0; r.len()],
            };
            for (row, &xj) in buf.chunks(r.len()).zip(x) {
                if xj != 0.0 {
                    for (yi, &b) in y.iter_mut().zip(row) {
                        *yi += xj * b as f64;
                    }
                }
            }
            let g: Vec<f64> = buf
                .chunks(r.len())
                .map(|row| row.iter().zip(&y).map(|(&b, yi)| b as f64 * yi).sum())
                .collect();
            (g, y.iter().map(|v| v * v).sum::<f64>())
        });
        let mut g = vec![0.0; k];
        let mut sq = 0.0;
        for (pg, ps) in parts {
            for (a, b) in g.iter_mut().zip(pg) {
                *a += b;
            }
            sq += ps;
        }
        Ok((g, sq))
    }
}

fn residual_target(schema: &ParameterSchema, theta_star: &[f32]) -> Result<Vec<f64>> {
    if theta_star.len() != schema.d() {
        return Err(PrancError::LengthMismatch {
            what: "target theta",
            expected: schema.d(),
            actual: theta_star.len(),
        });
    }
    if theta_star.iter().any(|v| !v.is_finite()) {
        return Err(PrancError::NonFinite("target theta"));
    }
    Ok(theta_star
        .iter()
        .zip(schema.prior_vector())
        .map(|(&t, p)| t as f64 - p as f64)
        .collect())
}

/// Largest eigenvalue of the Gram matrix `B^T B` by power iteration.
pub fn gram_spectral_norm(spec: &BasisSpec, schema: &ParameterSchema, iters: usize, stream: &StreamConfig) -> Result<f64> {
    let pass = SpanPass::new(spec, schema, stream)?;
    let k = spec.k();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let (w, _) = pass.normal(&v, None)?;
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    Ok(lambda)
}

/// Minimizes `||theta* - theta0 - sum_j alpha_j basis_j||^2` by gradient
/// descent in alpha, streaming the basis models on every iteration.
pub fn regress_span(theta_star: &[f32], spec: &BasisSpec, schema: &ParameterSchema, config: &RegressionConfig) -> Result<RegressionFit> {
    let target = residual_target(schema, theta_star)?;
    let pass = SpanPass::new(spec, schema, &config.stream)?;
    let lipschitz = gram_spectral_norm(spec, schema, config.power_iters, &config.stream)?;
    let k = spec.k();
    let mut alpha = vec![0.0f64; k];
    let mut history = Vec::new();
    if lipschitz == 0.0 {
        let res = target.iter().map(|v| v * v).sum::<f64>().sqrt();
        return Ok(RegressionFit {
            alpha: vec![0.0; k],
            residual: res,
            history: vec![res],
            lipschitz,
        });
    }
    let step = config.step_scale / lipschitz;
    let mut previous_alpha = alpha.clone();
    for iteration in 0..=config.max_iters {
        let (g, sq) = pass.normal(&alpha, Some(&target))?;
        let res = sq.sqrt();
        if let Some(&previous) = history.last() {
            if !res.is_finite() || res > previous * (1.0 + 1e-6) + 1e-10 * history[0] {
                return Err(PrancError::Divergence {
                    iteration,
                    residual: res,
                    previous,
                    step,
                });
            }
            if res >= previous {
                // rounding floor reached; keep the better iterate
                alpha = previous_alpha;
                break;
            }
        }
        let converged = history.last().is_some_and(|&p: &f64| p - res <= config.rel_tol * p);
        history.push(res);
        if converged || iteration == config.max_iters {
            break;
        }
        previous_alpha.clone_from(&alpha);
        for (a, gj) in alpha.iter_mut().zip(g) {
            *a -= step * gj;
        }
    }
    let alpha: Vec<f32> = alpha.iter().map(|&a| a as f32).collect();
    let rounded: Vec<f64> = alpha.iter().map(|&a| a as f64).collect();
    let (_, sq) = pass.normal(&rounded, Some(&target))?;
    Ok(RegressionFit {
        alpha,
        residual: sq.sqrt(),
        history,
        lipschitz,
    })
}

/// Least squares through the normal equations. Small k only.
pub fn regress_span_exact(theta_star: &[f32], spec: &BasisSpec, schema: &ParameterSchema, stream: &StreamConfig) -> Result<RegressionFit> {
    let k = spec.k();
    if k > EXACT_MAX_K {
        return Err(PrancError::InvalidConfig(format!("exact solver supports k <= {EXACT_MAX_K}, got {k}")));
    }
    let target = residual_target(schema, theta_star)?;
    let pass = SpanPass::new(spec, schema, stream)?;
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for r in pass.ranges() {
        let mut buf = vec![0.0f32; k * r.len()];
        pass.fill(&r, &mut buf);
        let b = DMatrix::from_iterator(r.len(), k, buf.iter().map(|&v| v as f64));
        gram += b.tr_mul(&b);
        rhs += b.tr_mul(&DVector::from_column_slice(&target[r.clone()]));
    }
    let solution = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| PrancError::InvalidConfig(e.to_string()))?,
    };
    let alpha: Vec<f32> = solution.iter().map(|&a| a as f32).collect();
    let rounded: Vec<f64> = alpha.iter().map(|&a| a as f64).collect();
    let (_, sq) = pass.normal(&rounded, Some(&target))?;
    Ok(RegressionFit {
        alpha,
        residual: sq.sqrt(),
        history: vec![sq.sqrt()],
        lipschitz: f64::NAN,
    })
}

/// Test accuracy of `theta0 + sum_j alpha_j basis_j` with the given
/// batchnorm statistics.
pub fn span_accuracy(
    model: &Model,
    spec: &BasisSpec,
    alpha: &[f32],
    bn_stats: &[f32],
    data: &Dataset,
    stream: &StreamConfig,
) -> Result<f64> {
    let theta = reconstruct_full(spec, model.schema(), alpha, stream)?;
    evaluate(model, &theta, bn_stats, data, 256)
}

/// One CSV row of a baseline comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub method: String,
    pub k: usize,
    pub residual: Option<f64>,
    pub accuracy: f64,
}

impl BaselineRow {
    pub const HEADER: &'static str = "method,k,residual,accuracy";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},", self.method, self.k);
        if let Some(r) = self.residual {
            let _ = write!(s, "{r:.6e}");
        }
        let _ = write!(s, ",{:.4}", self.accuracy);
        s
    }
}
