use std::ops::Range;

use super::{check_alpha, mix_range, MixScale};
use crate::basis::{BasisSpec, ParameterSchema, StreamConfig};
use crate::codec::PrancPacket;
use crate::error::{check_range, PrancError, Result};
use crate::nn::{Model, Tensor, WeightSource};

/// Regenerates each requested weight block from the seed and alpha and
/// frees it as soon as the layer has consumed it.
pub struct OnDemandSource<'a> {
    spec: BasisSpec,
    schema: &'a ParameterSchema,
    scale: MixScale,
    all: Vec<usize>,
    budget: usize,
    stream: StreamConfig,
    resident: usize,
    peak: usize,
    blocks: usize,
}

impl<'a> OnDemandSource<'a> {
    /// `budget` is the largest number of floats allowed to be resident at
    /// once.
    pub fn new(spec: BasisSpec, schema: &'a ParameterSchema, alpha: &[f32], budget: usize) -> Result<Self> {
        check_alpha(&spec, alpha)?;
        Ok(Self {
            spec,
            schema,
            scale: MixScale::new(alpha, schema)?,
            all: (0..spec.k()).collect(),
            budget,
            stream: StreamConfig::sequential(),
            resident: 0,
            peak: 0,
            blocks: 0,
        })
    }

    pub fn peak_resident(&self) -> usize {
        self.peak
    }

    pub fn blocks_generated(&self) -> usize {
        self.blocks
    }
}

impl WeightSource<f32> for OnDemandSource<'_> {
    fn with_block<R>(&mut self, range: Range<usize>, f: impl FnOnce(&[f32]) -> R) -> Result<R> {
        check_range(&range, self.schema.d())?;
        let need = self.resident + range.len();
        if need > self.budget {
            return Err(PrancError::BudgetTooSmall {
                budget: self.budget,
                required: need,
            });
        }
        let len = range.len();
        let mut block = vec![0.0f32; len];
        mix_range(&self.spec, self.schema, &self.scale, &self.all, range, &mut block, &self.stream)?;
        self.resident = need;
        self.peak = self.peak.max(self.resident);
        self.blocks += 1;
        let r = f(&block);
        drop(block);
        self.resident -= len;
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnDemandReport {
    /// Most weight floats resident at any point of the forward pass.
    pub peak_resident: usize,
    pub blocks_generated: usize,
}

/// Eval-mode logits for `batch` without ever materializing theta. Fails
/// with [`PrancError::BudgetTooSmall`] if `budget` is below the largest
/// single block the model needs.
pub fn infer_on_demand(
    packet: &PrancPacket,
    model: &Model,
    batch: &Tensor<f32>,
    budget: usize,
    seed_override: Option<u64>,
) -> Result<(Tensor<f32>, OnDemandReport)> {
    packet.check_schema(model.schema())?;
    let required = model.largest_block();
    if budget < required {
        return Err(PrancError::BudgetTooSmall { budget, required });
    }
    let spec = packet.basis_spec(seed_override)?;
    let mut source = OnDemandSource::new(spec, model.schema(), &packet.alpha, budget)?;
    let logits = model.forward_eval_with(&mut source, &packet.bn_stats, batch)?;
    Ok((
        logits,
        OnDemandReport {
            peak_resident: source.peak_resident(),
            blocks_generated: source.blocks_generated(),
        },
    ))
}
