use std::ops::Range;

use super::config::{LayerDef, ModelDef};
use super::tensor::{Scalar, Tensor};
use crate::basis::{BnStatSlot, ParameterSchema, SegmentKind};
use crate::error::{PrancError, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Supplies parameter blocks to the forward pass. The dense path hands out
/// slices of a resident theta; the on-demand path regenerates each block and
/// drops it once the closure returns.
pub trait WeightSource<T: Scalar> {
    fn with_block<R>(&mut self, range: Range<usize>, f: impl FnOnce(&[T]) -> R) -> Result<R>;
}

/// A fully materialized theta.
pub struct Resident<'a, T>(pub &'a [T]);

impl<T: Scalar> WeightSource<T> for Resident<'_, T> {
    #[inline]
    fn with_block<R>(&mut self, range: Range<usize>, f: impl FnOnce(&[T]) -> R) -> Result<R> {
        Ok(f(&self.0[range]))
    }
}

#[derive(Debug, Clone)]
enum Op {
    Dense {
        fan_in: usize,
        out: usize,
        weight: usize,
        bias: usize,
    },
    Conv {
        cin: usize,
        h: usize,
        w: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        oh: usize,
        ow: usize,
        weight: usize,
        bias: usize,
    },
    Relu,
    MaxPool {
        c: usize,
        h: usize,
        w: usize,
        size: usize,
        oh: usize,
        ow: usize,
    },
    BatchNorm {
        channels: usize,
        spatial: usize,
        gamma: usize,
        beta: usize,
        stat: usize,
    },
    Flatten,
}

#[derive(Debug, Clone)]
struct Layer {
    op: Op,
    out_shape: Vec<usize>,
}

/// A compiled [`ModelDef`]: layer shapes resolved and parameters laid out in
/// a [`ParameterSchema`].
#[derive(Debug, Clone)]
pub struct Model {
    def: ModelDef,
    layers: Vec<Layer>,
    schema: ParameterSchema,
}

#[derive(Debug)]
enum LayerCache<T> {
    Input(Tensor<T>),
    MaxPool { argmax: Vec<usize>, in_len: usize },
    BatchNorm { xhat: Vec<f64>, inv_std: Vec<f64> },
    Flatten,
}

/// Activations recorded by a train-mode forward pass; consumed by
/// [`Model::backward`].
#[derive(Debug)]
pub struct Cache<T> {
    fingerprint: u64,
    theta_hash: u64,
    mode: Mode,
    batch: usize,
    layers: Vec<LayerCache<T>>,
}

fn theta_hash<T: Scalar>(theta: &[T]) -> u64 {
    theta.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, v| {
        (h ^ v.to_f64().to_bits()).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[inline]
fn dot<T: Scalar>(x: &[T], w: &[T]) -> f64 {
    x.iter()
        .zip(w)
        .fold(0.0, |acc, (&a, &b)| acc + a.to_f64() * b.to_f64())
}

/// Output positions `o` with `0 <= o * stride + offset - pad < len`.
#[inline]
fn valid_range(out_len: usize, stride: usize, offset: usize, pad: usize, len: usize) -> Range<usize> {
    let lo = if pad > offset {
        (pad - offset).div_ceil(stride)
    } else {
        0
    };
    // largest o with o*stride + offset < len + pad
    let limit = len + pad;
    let hi = if limit > offset {
        ((limit - offset - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    lo..hi.max(lo)
}

impl Model {
    pub fn new(def: ModelDef) -> Result<Self> {
        if def.layers.is_empty() {
            return Err(PrancError::InvalidModel("empty layer list".into()));
        }
        if def.classes < 2 {
            return Err(PrancError::InvalidModel("need at least two classes".into()));
        }
        let mut shape = def.input.clone();
        if shape.contains(&0) {
            return Err(PrancError::InvalidModel(format!("degenerate input {shape:?}")));
        }
        let mut offset = 0usize;
        let mut stat = 0usize;
        let mut segments = Vec::new();
        let mut bn_slots = Vec::new();
        let mut layers = Vec::new();
        for (id, layer) in def.layers.iter().enumerate() {
            let id32 = id as u32;
            let bad = |msg: String| PrancError::InvalidModel(format!("layer {id}: {msg}"));
            let (op, out_shape) = match *layer {
                LayerDef::Dense { out } => {
                    if shape.len() != 1 {
                        return Err(bad(format!("dense needs flat input, got {shape:?}")));
                    }
                    if out == 0 {
                        return Err(bad("dense with zero outputs".into()));
                    }
                    let fan_in = shape[0];
                    segments.push((id32, SegmentKind::DenseWeight, vec![out, fan_in]));
                    segments.push((id32, SegmentKind::DenseBias, vec![out]));
                    let weight = offset;
                    let bias = weight + out * fan_in;
                    offset = bias + out;
                    (
                        Op::Dense {
                            fan_in,
                            out,
                            weight,
                            bias,
                        },
                        vec![out],
                    )
                }
                LayerDef::Conv2d {
                    out,
                    kernel,
                    stride,
                    padding,
                } => {
                    if shape.len() != 3 {
                        return Err(bad(format!("conv2d needs CxHxW input, got {shape:?}")));
                    }
                    if out == 0 || kernel == 0 || stride == 0 {
                        return Err(bad("conv2d out, kernel and stride must be positive".into()));
                    }
                    let (cin, h, w) = (shape[0], shape[1], shape[2]);
                    if h + 2 * padding < kernel || w + 2 * padding < kernel {
                        return Err(bad(format!("kernel {kernel} larger than padded input {shape:?}")));
                    }
                    let oh = (h + 2 * padding - kernel) / stride + 1;
                    let ow = (w + 2 * padding - kernel) / stride + 1;
                    segments.push((id32, SegmentKind::ConvWeight, vec![out, cin, kernel, kernel]));
                    segments.push((id32, SegmentKind::ConvBias, vec![out]));
                    let weight = offset;
                    let bias = weight + out * cin * kernel * kernel;
                    offset = bias + out;
                    (
                        Op::Conv {
                            cin,
                            h,
                            w,
                            cout: out,
                            k: kernel,
                            stride,
                            pad: padding,
                            oh,
                            ow,
                            weight,
                            bias,
                        },
                        vec![out, oh, ow],
                    )
                }
                LayerDef::Relu => (Op::Relu, shape.clone()),
                LayerDef::MaxPool2d { size } => {
                    if shape.len() != 3 || size == 0 || shape[1] < size || shape[2] < size {
                        return Err(bad(format!("maxpool size {size} on {shape:?}")));
                    }
                    let (c, h, w) = (shape[0], shape[1], shape[2]);
                    let (oh, ow) = (h / size, w / size);
                    (
                        Op::MaxPool {
                            c,
                            h,
                            w,
                            size,
                            oh,
                            ow,
                        },
                        vec![c, oh, ow],
                    )
                }
                LayerDef::BatchNorm2d => {
                    let channels = shape[0];
                    let spatial = shape[1..].iter().product();
                    segments.push((id32, SegmentKind::BnGamma, vec![channels]));
                    segments.push((id32, SegmentKind::BnBeta, vec![channels]));
                    bn_slots.push(BnStatSlot {
                        layer_id: id32,
                        channels,
                    });
                    let gamma = offset;
                    let beta = gamma + channels;
                    offset = beta + channels;
                    let op = Op::BatchNorm {
                        channels,
                        spatial,
                        gamma,
                        beta,
                        stat,
                    };
                    stat += 2 * channels;
                    (op, shape.clone())
                }
                LayerDef::Flatten => (Op::Flatten, vec![shape.iter().product()]),
            };
            layers.push(Layer {
                op,
                out_shape: out_shape.clone(),
            });
            shape = out_shape;
        }
        if shape != [def.classes] {
            return Err(PrancError::InvalidModel(format!(
                "network ends in {shape:?}, expected [{}]",
                def.classes
            )));
        }
        let schema = ParameterSchema::new(segments, bn_slots)?;
        debug_assert_eq!(schema.d(), offset);
        Ok(Self {
            def,
            layers,
            schema,
        })
    }

    pub fn def(&self) -> &ModelDef {
        &self.def
    }

    pub fn schema(&self) -> &ParameterSchema {
        &self.schema
    }

    pub fn classes(&self) -> usize {
        self.def.classes
    }

    /// Fresh running statistics: means 0, variances 1.
    pub fn initial_stats<T: Scalar>(&self) -> Vec<T> {
        let mut stats = vec![T::default(); self.schema.bn_total()];
        for layer in &self.layers {
            if let Op::BatchNorm { channels, stat, .. } = layer.op {
                stats[stat + channels..stat + 2 * channels].fill(T::from_f64(1.0));
            }
        }
        stats
    }

    /// Largest contiguous weight block fetched at once on the forward pass
    /// (a dense row or a conv filter).
    pub fn largest_block(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l.op {
                Op::Dense { fan_in, .. } => fan_in,
                Op::Conv { cin, k, .. } => cin * k * k,
                Op::BatchNorm { .. } => 1,
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    fn check_inputs<T: Scalar>(&self, theta: &[T], stats_len: usize, x: &Tensor<T>) -> Result<()> {
        if theta.len() != self.schema.d() {
            return Err(PrancError::LengthMismatch {
                what: "theta",
                expected: self.schema.d(),
                actual: theta.len(),
            });
        }
        self.check_batch(stats_len, x)
    }

    fn check_batch<T: Scalar>(&self, stats_len: usize, x: &Tensor<T>) -> Result<()> {
        if stats_len != self.schema.bn_total() {
            return Err(PrancError::LengthMismatch {
                what: "batchnorm statistics",
                expected: self.schema.bn_total(),
                actual: stats_len,
            });
        }
        if x.shape()[1..] != self.def.input[..] || x.batch() == 0 {
            return Err(PrancError::ShapeMismatch(format!(
                "input batch {:?} does not match model input {:?}",
                x.shape(),
                self.def.input
            )));
        }
        Ok(())
    }

    /// Forward pass. In train mode batchnorm normalizes with batch
    /// statistics and updates `stats`; in eval mode `stats` is read only.
    pub fn forward<T: Scalar>(
        &self,
        theta: &[T],
        stats: &mut [T],
        x: &Tensor<T>,
        mode: Mode,
    ) -> Result<(Tensor<T>, Cache<T>)> {
        self.check_inputs(theta, stats.len(), x)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        let logits = match mode {
            Mode::Train => self.run(&mut Resident(theta), Stats::Train(stats), x.clone(), Some(&mut layers))?,
            Mode::Eval => self.run(&mut Resident(theta), Stats::Eval(stats), x.clone(), None)?,
        };
        Ok((
            logits,
            Cache {
                fingerprint: self.schema.fingerprint(),
                theta_hash: theta_hash(theta),
                mode,
                batch: x.batch(),
                layers,
            },
        ))
    }

    pub fn forward_eval<T: Scalar>(&self, theta: &[T], stats: &[T], x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_inputs(theta, stats.len(), x)?;
        self.run(&mut Resident(theta), Stats::Eval(stats), x.clone(), None)
    }

    /// Eval-mode forward pulling weights block by block from `source`.
    pub fn forward_eval_with<T: Scalar, S: WeightSource<T>>(
        &self,
        source: &mut S,
        stats: &[T],
        x: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        self.check_batch(stats.len(), x)?;
        self.run(source, Stats::Eval(stats), x.clone(), None)
    }

    fn run<T: Scalar, S: WeightSource<T>>(
        &self,
        src: &mut S,
        mut stats: Stats<'_, T>,
        mut x: Tensor<T>,
        mut cache: Option<&mut Vec<LayerCache<T>>>,
    ) -> Result<Tensor<T>> {
        let n = x.batch();
        for layer in &self.layers {
            let mut out_shape = vec![n];
            out_shape.extend_from_slice(&layer.out_shape);
            let (y, entry) = match layer.op {
                Op::Dense {
                    fan_in,
                    out,
                    weight,
                    bias,
                } => {
                    let xs = x.data();
                    let mut y = vec![T::default(); n * out];
                    let mut acc = vec![0.0f64; n];
                    for o in 0..out {
                        let row = weight + o * fan_in..weight + (o + 1) * fan_in;
                        src.with_block(row, |w| {
                            for (s, a) in acc.iter_mut().enumerate() {
                                *a = dot(&xs[s * fan_in..(s + 1) * fan_in], w);
                            }
                        })?;
                        src.with_block(bias + o..bias + o + 1, |b| {
                            let b = b[0].to_f64();
                            for (s, &a) in acc.iter().enumerate() {
                                y[s * out + o] = T::from_f64(a + b);
                            }
                        })?;
                    }
                    (Tensor::new(out_shape, y)?, LayerCache::Input(x))
                }
                Op::Conv {
                    cin,
                    h,
                    w,
                    cout,
                    k,
                    stride,
                    pad,
                    oh,
                    ow,
                    weight,
                    bias,
                } => {
                    let xs = x.data();
                    let plane = oh * ow;
                    let in_len = cin * h * w;
                    let mut y = vec![T::default(); n * cout * plane];
                    let mut pre = vec![0.0f64; n * plane];
                    let filter = cin * k * k;
                    for co in 0..cout {
                        let range = weight + co * filter..weight + (co + 1) * filter;
                        src.with_block(range, |f| {
                            pre.fill(0.0);
                            for s in 0..n {
                                let xin = &xs[s * in_len..(s + 1) * in_len];
                                let acc = &mut pre[s * plane..(s + 1) * plane];
                                for ci in 0..cin {
                                    let xc = &xin[ci * h * w..(ci + 1) * h * w];
                                    for kh in 0..k {
                                        let oys = valid_range(oh, stride, kh, pad, h);
                                        for kw in 0..k {
                                            let wv = f[(ci * k + kh) * k + kw].to_f64();
                                            let oxs = valid_range(ow, stride, kw, pad, w);
                                            for oy in oys.clone() {
                                                let iy = oy * stride + kh - pad;
                                                let xrow = &xc[iy * w..(iy + 1) * w];
                                                let arow = &mut acc[oy * ow..(oy + 1) * ow];
                                                for ox in oxs.clone() {
                                                    arow[ox] += wv * xrow[ox * stride + kw - pad].to_f64();
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        })?;
                        src.with_block(bias + co..bias + co + 1, |b| {
                            let b = b[0].to_f64();
                            for s in 0..n {
                                let dst = &mut y[(s * cout + co) * plane..(s * cout + co + 1) * plane];
                                for (d, &a) in dst.iter_mut().zip(&pre[s * plane..(s + 1) * plane]) {
                                    *d = T::from_f64(a + b);
                                }
                            }
                        })?;
                    }
                    (Tensor::new(out_shape, y)?, LayerCache::Input(x))
                }
                Op::Relu => {
                    let zero = T::default();
                    let y: Vec<T> = x
                        .data()
                        .iter()
                        .map(|&v| if v.to_f64() > 0.0 { v } else { zero })
                        .collect();
                    (Tensor::new(out_shape, y)?, LayerCache::Input(x))
                }
                Op::MaxPool {
                    c,
                    h,
                    w,
                    size,
                    oh,
                    ow,
                } => {
                    let xs = x.data();
                    let in_len = c * h * w;
                    let mut y = Vec::with_capacity(n * c * oh * ow);
                    let mut argmax = Vec::with_capacity(n * c * oh * ow);
                    for s in 0..n {
                        for ch in 0..c {
                            let base = s * in_len + ch * h * w;
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let mut best = base + oy * size * w + ox * size;
                                    for dy in 0..size {
                                        for dx in 0..size {
                                            let idx = base + (oy * size + dy) * w + ox * size + dx;
                                            if xs[idx] > xs[best] {
                                                best = idx;
                                            }
                                        }
                                    }
                                    y.push(xs[best]);
                                    argmax.push(best);
                                }
                            }
                        }
                    }
                    let in_len = xs.len();
                    (Tensor::new(out_shape, y)?, LayerCache::MaxPool { argmax, in_len })
                }
                Op::BatchNorm {
                    channels,
                    spatial,
                    gamma,
                    beta,
                    stat,
                } => {
                    let xs = x.data();
                    let count = n * spatial;
                    let mut y = vec![T::default(); xs.len()];
                    let mut xhat_all = vec![0.0f64; xs.len()];
                    let mut inv_all = vec![0.0f64; channels];
                    let at = |s: usize, c: usize| (s * channels + c) * spatial;
                    for c in 0..channels {
                        let (mean, inv_std) = match &mut stats {
                            Stats::Train(st) => {
                                let mut sum = 0.0;
                                for s in 0..n {
                                    sum += xs[at(s, c)..at(s, c) + spatial].iter().map(|v| v.to_f64()).sum::<f64>();
                                }
                                let mean = sum / count as f64;
                                let mut sq = 0.0;
                                for s in 0..n {
                                    for v in &xs[at(s, c)..at(s, c) + spatial] {
                                        let dlt = v.to_f64() - mean;
                                        sq += dlt * dlt;
                                    }
                                }
                                let var = sq / count as f64;
                                let unbiased = if count > 1 { sq / (count - 1) as f64 } else { var };
                                let rm = &mut st[stat + c];
                                *rm = T::from_f64((1.0 - BN_MOMENTUM) * rm.to_f64() + BN_MOMENTUM * mean);
                                let rv = &mut st[stat + channels + c];
                                *rv = T::from_f64((1.0 - BN_MOMENTUM) * rv.to_f64() + BN_MOMENTUM * unbiased);
                                (mean, 1.0 / (var + BN_EPS).sqrt())
                            }
                            Stats::Eval(st) => {
                                let mean = st[stat + c].to_f64();
                                let var = st[stat + channels + c].to_f64();
                                (mean, 1.0 / (var + BN_EPS).sqrt())
                            }
                        };
                        inv_all[c] = inv_std;
                        let g = src.with_block(gamma + c..gamma + c + 1, |g| g[0].to_f64())?;
                        let b = src.with_block(beta + c..beta + c + 1, |b| b[0].to_f64())?;
                        for s in 0..n {
                            for i in at(s, c)..at(s, c) + spatial {
                                let xh = (xs[i].to_f64() - mean) * inv_std;
                                xhat_all[i] = xh;
                                y[i] = T::from_f64(g * xh + b);
                            }
                        }
                    }
                    (
                        Tensor::new(out_shape, y)?,
                        LayerCache::BatchNorm {
                            xhat: xhat_all,
                            inv_std: inv_all,
                        },
                    )
                }
                Op::Flatten => (x.reshape(out_shape), LayerCache::Flatten),
            };
            if let Some(c) = cache.as_deref_mut() {
                c.push(entry);
            }
            x = y;
        }
        Ok(x)
    }

    /// Exact gradient of the loss with respect to theta, given the loss
    /// gradient at the logits. Running statistics receive no gradient.
    pub fn backward<T: Scalar>(&self, theta: &[T], cache: Cache<T>, dlogits: &Tensor<T>) -> Result<Vec<T>> {
        if cache.mode != Mode::Train {
            return Err(PrancError::StaleCache("cache comes from an eval-mode pass".into()));
        }
        if cache.fingerprint != self.schema.fingerprint() || cache.layers.len() != self.layers.len() {
            return Err(PrancError::StaleCache("cache belongs to a different model".into()));
        }
        if theta.len() != self.schema.d() || cache.theta_hash != theta_hash(theta) {
            return Err(PrancError::StaleCache("theta changed since the forward pass".into()));
        }
        if dlogits.shape() != [cache.batch, self.def.classes] {
            return Err(PrancError::ShapeMismatch(format!(
                "logit gradient {:?}, expected [{}, {}]",
                dlogits.shape(),
                cache.batch,
                self.def.classes
            )));
        }
        let n = cache.batch;
        let mut grad = vec![0.0f64; self.schema.d()];
        let mut g: Vec<f64> = dlogits.data().iter().map(|v| v.to_f64()).collect();
        for (layer, entry) in self.layers.iter().zip(cache.layers).rev() {
            g = match (&layer.op, entry) {
                (
                    &Op::Dense {
                        fan_in,
                        out,
                        weight,
                        bias,
                    },
                    LayerCache::Input(x),
                ) => {
                    let xs = x.data();
                    let mut dx = vec![0.0f64; n * fan_in];
                    for o in 0..out {
                        let dw = &mut grad[weight + o * fan_in..weight + (o + 1) * fan_in];
                        let w = &theta[weight + o * fan_in..weight + (o + 1) * fan_in];
                        let mut db = 0.0;
                        for s in 0..n {
                            let gs = g[s * out + o];
                            if gs == 0.0 {
                                continue;
                            }
                            db += gs;
                            let xrow = &xs[s * fan_in..(s + 1) * fan_in];
                            let dxrow = &mut dx[s * fan_in..(s + 1) * fan_in];
                            for i in 0..fan_in {
                                dw[i] += gs * xrow[i].to_f64();
                                dxrow[i] += gs * w[i].to_f64();
                            }
                        }
                        grad[bias + o] += db;
                    }
                    dx
                }
                (
                    &Op::Conv {
                        cin,
                        h,
                        w,
                        cout,
                        k,
                        stride,
                        pad,
                        oh,
                        ow,
                        weight,
                        bias,
                    },
                    LayerCache::Input(x),
                ) => {
                    let xs = x.data();
                    let plane = oh * ow;
                    let in_len = cin * h * w;
                    let filter = cin * k * k;
                    let mut dx = vec![0.0f64; n * in_len];
                    for co in 0..cout {
                        let f = &theta[weight + co * filter..weight + (co + 1) * filter];
                        let mut db = 0.0;
                        for s in 0..n {
                            let gp = &g[(s * cout + co) * plane..(s * cout + co + 1) * plane];
                            db += gp.iter().sum::<f64>();
                            let xin = &xs[s * in_len..(s + 1) * in_len];
                            let dxin = &mut dx[s * in_len..(s + 1) * in_len];
                            for ci in 0..cin {
                                for kh in 0..k {
                                    let oys = valid_range(oh, stride, kh, pad, h);
                                    for kw in 0..k {
                                        let widx = (ci * k + kh) * k + kw;
                                        let wv = f[widx].to_f64();
                                        let oxs = valid_range(ow, stride, kw, pad, w);
                                        let mut dw = 0.0;
                                        for oy in oys.clone() {
                                            let iy = oy * stride + kh - pad;
                                            let base = ci * h * w + iy * w;
                                            for ox in oxs.clone() {
                                                let gv = gp[oy * ow + ox];
                                                let ix = base + ox * stride + kw - pad;
                                                dw += gv * xin[ix].to_f64();
                                                dxin[ix] += gv * wv;
                                            }
                                        }
                                        grad[weight + co * filter + widx] += dw;
                                    }
                                }
                            }
                        }
                        grad[bias + co] += db;
                    }
                    dx
                }
                (Op::Relu, LayerCache::Input(x)) => g
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv.to_f64() > 0.0 { gv } else { 0.0 })
                    .collect(),
                (Op::MaxPool { .. }, LayerCache::MaxPool { argmax, in_len }) => {
                    let mut dx = vec![0.0f64; in_len];
                    for (&idx, &gv) in argmax.iter().zip(&g) {
                        dx[idx] += gv;
                    }
                    dx
                }
                (
                    &Op::BatchNorm {
                        channels,
                        spatial,
                        gamma,
                        beta,
                        ..
                    },
                    LayerCache::BatchNorm { xhat, inv_std },
                ) => {
                    let count = (n * spatial) as f64;
                    let mut dx = vec![0.0f64; g.len()];
                    let at = |s: usize, c: usize| (s * channels + c) * spatial;
                    for c in 0..channels {
                        let (mut sg, mut sgx) = (0.0, 0.0);
                        for s in 0..n {
                            for i in at(s, c)..at(s, c) + spatial {
                                sg += g[i];
                                sgx += g[i] * xhat[i];
                            }
                        }
                        grad[gamma + c] += sgx;
                        grad[beta + c] += sg;
                        let scale = theta[gamma + c].to_f64() * inv_std[c] / count;
                        for s in 0..n {
                            for i in at(s, c)..at(s, c) + spatial {
                                dx[i] = scale * (count * g[i] - sg - xhat[i] * sgx);
                            }
                        }
                    }
                    dx
                }
                (Op::Flatten, LayerCache::Flatten) => g,
                _ => return Err(PrancError::StaleCache("cache layout does not match model".into())),
            };
        }
        Ok(grad.into_iter().map(T::from_f64).collect())
    }
}

enum Stats<'a, T> {
    Train(&'a mut [T]),
    Eval(&'a [T]),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_brute_force() {
        for len in 1..8 {
            for k in 1..=len.min(4) {
                for pad in 0..3 {
                    for stride in 1..4 {
                        if len + 2 * pad < k {
                            continue;
                        }
                        let out = (len + 2 * pad - k) / stride + 1;
                        for off in 0..k {
                            let expect: Vec<usize> = (0..out)
                                .filter(|&o| {
                                    let p = (o * stride + off) as isize - pad as isize;
                                    p >= 0 && (p as usize) < len
                                })
                                .collect();
                            let got: Vec<usize> = valid_range(out, stride, off, pad, len).collect();
                            assert_eq!(got, expect, "len {len} k {k} pad {pad} stride {stride} off {off}");
                        }
                    }
                }
            }
        }
    }
}
