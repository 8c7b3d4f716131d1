//! A small CPU network engine: dense, conv2d, ReLU, max-pooling, batchnorm
//! and flatten layers with exact backpropagation to the flat theta.

mod config;
mod loss;
mod model;
mod tensor;

pub use config::{LayerDef, ModelDef};
pub use loss::{cross_entropy, predict};
pub use model::{Cache, Mode, Model, Resident, WeightSource, BN_EPS, BN_MOMENTUM};
pub use tensor::{Scalar, Tensor};

use crate::basis::ParameterSchema;
use crate::data::Dataset;
use crate::error::{PrancError, Result};

pub fn build_schema(def: &ModelDef) -> Result<ParameterSchema> {
    Ok(Model::new(def.clone())?.schema().clone())
}

/// Fraction of samples whose argmax logit (lowest index on ties) matches
/// the label, evaluated in eval mode.
pub fn evaluate(model: &Model, theta: &[f32], stats: &[f32], data: &Dataset, batch: usize) -> Result<f64> {
    evaluate_with(model, data, batch, |x| model.forward_eval(theta, stats, x))
}

/// [`evaluate`] with a caller-supplied forward pass.
pub fn evaluate_with(
    model: &Model,
    data: &Dataset,
    batch: usize,
    mut forward: impl FnMut(&Tensor<f32>) -> Result<Tensor<f32>>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(PrancError::EmptyData("evaluation set"));
    }
    if data.classes != model.classes() {
        return Err(PrancError::ShapeMismatch(format!(
            "dataset has {} classes, model {}",
            data.classes,
            model.classes()
        )));
    }
    let mut correct = 0usize;
    for idx in data.batches(batch.max(1)) {
        let x = data.inputs.select(&idx);
        let logits = forward(&x)?;
        correct += predict(&logits)
            .iter()
            .zip(&idx)
            .filter(|(p, &i)| **p == data.labels[i])
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}
