//! CIFAR-10 binary batches: 1 label byte followed by 3072 channel-major
//! pixel bytes (32x32 red, then green, then blue) per record.

use std::path::Path;

use crate::error::{PrancError, Result};
use crate::nn::Tensor;

use super::Dataset;

pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

/// Per-channel normalization applied after scaling pixels to `[0, 1]`.
pub const CIFAR_MEAN: [f32; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR_STD: [f32; 3] = [0.2470, 0.2435, 0.2616];

pub fn parse_cifar_bin(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(PrancError::DataFormat(format!(
            "CIFAR binary size {} is not a positive multiple of {CIFAR_RECORD}",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut pixels = Vec::with_capacity(n * 3072);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(PrancError::DataFormat(format!("CIFAR label {label} out of range")));
        }
        labels.push(label);
        for (c, plane) in rec[1..].chunks_exact(1024).enumerate() {
            pixels.extend(
                plane
                    .iter()
                    .map(|&p| (p as f32 / 255.0 - CIFAR_MEAN[c]) / CIFAR_STD[c]),
            );
        }
    }
    Ok(Dataset {
        inputs: Tensor::new(vec![n, 3, 32, 32], pixels)?,
        labels,
        classes: 10,
    })
}

pub fn load_cifar_bin(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_cifar_bin(&super::idx::read_maybe_gz(path.as_ref())?)
}
