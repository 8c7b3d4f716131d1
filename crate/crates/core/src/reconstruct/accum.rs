//! Order-independent accumulation of `sum_j alpha_j * basis_j[i]`.
//!
//! Each product of two f32 values is exact in f64. Scaling by a power of two
//! that depends only on the coefficient vector and the schema, then rounding
//! to an `i128`, gives every term a fixed integer value, and integer addition
//! is associative. Any chunking, ordering or worker split of the sum thus
//! lands on the same bits.

use crate::basis::ParameterSchema;
use crate::error::{PrancError, Result};

/// 2^e for e in the normal f64 exponent range, built from bits.
#[inline]
pub(crate) fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Smallest `e` with `x < 2^e` for positive finite `x`.
fn ceil_exponent(x: f64) -> i32 {
    let biased = ((x.to_bits() >> 52) & 0x7ff) as i32;
    if biased == 0 {
        -1022
    } else {
        biased - 1022
    }
}

#[derive(Debug, Clone)]
pub struct MixScale {
    shift: i32,
    inv: f64,
    scaled: Vec<f64>,
}

impl MixScale {
    pub fn new(alpha: &[f32], schema: &ParameterSchema) -> Result<Self> {
        let mut max_alpha = 0.0f64;
        for &a in alpha {
            if !a.is_finite() {
                return Err(PrancError::NonFinite("alpha"));
            }
            max_alpha = max_alpha.max((a as f64).abs());
        }
        let top = max_alpha * schema.max_bound() as f64;
        let shift = if top == 0.0 {
            0
        } else {
            // one spare bit for f32 rounding of basis values up to the bound
            let headroom = 65 - (alpha.len() as u64).leading_zeros() as i32 + 1;
            (126 - headroom - ceil_exponent(top)).clamp(-1000, 1000)
        };
        let scale = pow2(shift);
        Ok(Self {
            shift,
            inv: pow2(-shift),
            scaled: alpha.iter().map(|&a| a as f64 * scale).collect(),
        })
    }

    pub fn shift(&self) -> i32 {
        self.shift
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    #[inline]
    pub fn is_zero(&self, j: usize) -> bool {
        self.scaled[j] == 0.0
    }

    /// Adds `alpha_j * basis` into `acc` elementwise.
    #[inline]
    pub fn accumulate(&self, j: usize, basis: &[f32], acc: &mut [i128]) {
        let c = self.scaled[j];
        if c == 0.0 {
            return;
        }
        for (a, &v) in acc.iter_mut().zip(basis) {
            *a += (c * v as f64).round() as i128;
        }
    }

    #[inline]
    pub fn finish(&self, sum: i128, prior: f32) -> f32 {
        (sum as f64 * self.inv + prior as f64) as f32
    }
}
