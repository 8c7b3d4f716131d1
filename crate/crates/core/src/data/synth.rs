//! Synthetic desk-scale datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::nn::Tensor;

/// Isotropic Gaussian blobs in the plane, one per class, centred on the
/// vertices of a regular polygon of unit radius (an equilateral triangle for
/// three classes). Samples are interleaved by class.
pub fn gen_blobs(classes: usize, per_class: usize, spread: f64, seed: u64) -> Dataset {
    assert!(classes >= 2, "blobs need at least two classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(f64, f64)> = (0..classes)
        .map(|c| {
            let a = std::f64::consts::TAU * c as f64 / classes as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let noise = Normal::new(0.0, spread.max(0.0)).expect("finite spread");
    let mut data = Vec::with_capacity(classes * per_class * 2);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            data.push((cx + noise.sample(&mut rng)) as f32);
            data.push((cy + noise.sample(&mut rng)) as f32);
            labels.push(c);
        }
    }
    Dataset {
        inputs: Tensor::new(vec![labels.len(), 2], data).expect("consistent shape"),
        labels,
        classes,
    }
}

/// Two interleaved spirals (classes 0 and 1) with Gaussian jitter.
pub fn gen_spirals(per_class: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut data = Vec::with_capacity(per_class * 4);
    let mut labels = Vec::with_capacity(per_class * 2);
    for _ in 0..per_class {
        let t: f64 = rng.random_range(0.25..1.0);
        let angle = t * 3.0 * std::f64::consts::PI;
        for c in 0..2 {
            let sign = if c == 0 { 1.0 } else { -1.0 };
            data.push((sign * t * angle.cos() + jitter.sample(&mut rng)) as f32);
            data.push((sign * t * angle.sin() + jitter.sample(&mut rng)) as f32);
            labels.push(c);
        }
    }
    Dataset {
        inputs: Tensor::new(vec![labels.len(), 2], data).expect("consistent shape"),
        labels,
        classes: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let a = gen_blobs(3, 50, 0.2, 9);
        let b = gen_blobs(3, 50, 0.2, 9);
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.len(), 150);
        for c in 0..3 {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 50);
        }
        assert_ne!(gen_blobs(3, 50, 0.2, 10).inputs, a.inputs);
    }

    #[test]
    fn zero_spread_is_separable_by_nearest_neighbour() {
        let train = gen_blobs(4, 5, 0.0, 1);
        let test = gen_blobs(4, 5, 0.0, 2);
        let mut correct = 0;
        for i in 0..test.len() {
            let q = test.inputs.sample(i);
            let nearest = (0..train.len())
                .min_by(|&a, &b| {
                    let da = dist2(q, train.inputs.sample(a));
                    let db = dist2(q, train.inputs.sample(b));
                    da.total_cmp(&db)
                })
                .unwrap();
            correct += (train.labels[nearest] == test.labels[i]) as usize;
        }
        assert_eq!(correct, test.len());
    }

    fn dist2(a: &[f32], b: &[f32]) -> f32 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn spirals_have_two_balanced_classes() {
        let s = gen_spirals(40, 0.01, 3);
        assert_eq!(s.len(), 80);
        assert_eq!(s.labels.iter().filter(|&&l| l == 1).count(), 40);
    }
}
