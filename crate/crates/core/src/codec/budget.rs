use std::fmt;

use crate::basis::ParameterSchema;
use crate::error::{PrancError, Result};

/// Scalars that must be communicated for a model: the coefficients plus the
/// raw batchnorm running statistics, with the seed counted separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBudget {
    pub d: usize,
    pub k: usize,
    pub bn: usize,
    pub seed_scalars: usize,
}

impl ParamBudget {
    pub fn from_counts(d: usize, k: usize, bn: usize) -> Self {
        Self {
            d,
            k,
            bn,
            seed_scalars: 1,
        }
    }

    pub fn communicated(&self) -> usize {
        self.k + self.bn
    }

    /// `d / (k + bn)`.
    pub fn compression_ratio(&self) -> f64 {
        self.d as f64 / self.communicated() as f64
    }
}

pub fn param_budget(schema: &ParameterSchema, k: usize) -> ParamBudget {
    ParamBudget::from_counts(schema.d(), k, schema.bn_total())
}

/// `1234567` -> `"1,234,567"`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for ParamBudget {
    /// `k + (bn)` accounting, e.g. `1,000 + (1,376)`; just `k` without
    /// batchnorm.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bn == 0 {
            write!(f, "{}", group_thousands(self.k))
        } else {
            write!(f, "{} + ({})", group_thousands(self.k), group_thousands(self.bn))
        }
    }
}

/// Seconds to push `bytes` through a link of `bits_per_second`.
pub fn estimate_transfer(bytes: u64, bits_per_second: f64) -> Result<f64> {
    if bits_per_second.is_nan() || bits_per_second <= 0.0 || bits_per_second.is_infinite() {
        return Err(PrancError::InvalidConfig(format!(
            "bitrate must be positive, got {bits_per_second}"
        )));
    }
    Ok(8.0 * bytes as f64 / bits_per_second)
}
