use super::tensor::{Scalar, Tensor};
use crate::error::{PrancError, Result};

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits. Softmax is stabilized by subtracting the row maximum.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let n = logits.batch();
    let c = logits.sample_len();
    if labels.len() != n {
        return Err(PrancError::LengthMismatch {
            what: "labels",
            expected: n,
            actual: labels.len(),
        });
    }
    let mut grad = Vec::with_capacity(n * c);
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (s, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(PrancError::ShapeMismatch(format!("label {label} >= {c} classes")));
        }
        let row: Vec<f64> = logits.sample(s).iter().map(|v| v.to_f64()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        total += sum.ln() - (row[label] - max);
        for (j, &e) in exps.iter().enumerate() {
            let p = e / sum;
            let target = if j == label { 1.0 } else { 0.0 };
            grad.push(T::from_f64((p - target) * inv_n));
        }
    }
    Ok((total * inv_n, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Index of the largest logit per row; the lowest index wins ties.
pub fn predict<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    (0..logits.batch())
        .map(|s| {
            let row = logits.sample(s);
            let mut best = 0;
            for (j, v) in row.iter().enumerate().skip(1) {
                if v.to_f64() > row[best].to_f64() {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        let logits = Tensor::new(vec![2, 10], vec![0.3f32; 20]).unwrap();
        let (loss, _) = cross_entropy(&logits, &[0, 7]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logit_gives_zero_loss() {
        let logits = Tensor::new(vec![1, 3], vec![0.0f32, 1000.0, 0.0]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn three_class_matches_hand_softmax() {
        // logits (1.0, 2.0, 0.5), label 2:
        // loss = ln(e^1 + e^2 + e^0.5) - 0.5
        let logits = Tensor::new(vec![1, 3], vec![1.0f64, 2.0, 0.5]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &[2]).unwrap();
        let z = 1f64.exp() + 2f64.exp() + 0.5f64.exp();
        assert!((loss - (z.ln() - 0.5)).abs() < 1e-14);
        let expect = [1f64.exp() / z, 2f64.exp() / z, 0.5f64.exp() / z - 1.0];
        for (g, e) in grad.data().iter().zip(expect) {
            assert!((g - e).abs() < 1e-14);
        }
        // frozen: ln(e + e^2 + e^0.5) - 0.5 = 1.96436878...
        assert!((loss - 1.964_368_784_1).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_label_rejected() {
        let logits = Tensor::new(vec![1, 3], vec![0.0f32; 3]).unwrap();
        assert!(cross_entropy(&logits, &[3]).is_err());
    }

    #[test]
    fn ties_pick_lowest_index() {
        let logits = Tensor::new(vec![2, 3], vec![1.0f32, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(predict(&logits), vec![0, 1]);
    }
}
