use crate::error::{PrancError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Heavy-ball SGD: `v = mu * v + g`, `step = -lr * v`.
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.9 }
    }
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            OptimizerKind::SgdMomentum { .. } => 0,
            OptimizerKind::Adam { .. } => 1,
        }
    }

    fn buffers(&self) -> usize {
        match self {
            OptimizerKind::SgdMomentum { .. } => 1,
            // first moment, second moment, per-coordinate step count
            OptimizerKind::Adam { .. } => 3,
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = PrancError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::default()),
            "adam" => Ok(OptimizerKind::adam()),
            other => Err(PrancError::InvalidConfig(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Per-coordinate optimizer state over all k coefficients; coordinates
/// keep their moments between the epochs in which they are selected.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    buffers: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, k: usize) -> Self {
        Self {
            kind,
            buffers: vec![vec![0.0; k]; kind.buffers()],
        }
    }

    pub fn from_buffers(kind: OptimizerKind, k: usize, buffers: Vec<Vec<f32>>) -> Result<Self> {
        if buffers.len() != kind.buffers() || buffers.iter().any(|b| b.len() != k) {
            return Err(PrancError::InvalidConfig(
                "optimizer buffers do not match optimizer kind or k".into(),
            ));
        }
        Ok(Self { kind, buffers })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn buffers(&self) -> &[Vec<f32>] {
        &self.buffers
    }

    /// Coefficient changes for the coordinates in `subset` given their
    /// gradients.
    pub fn step(&mut self, subset: &[usize], grads: &[f64], lr: f64) -> Vec<f32> {
        subset
            .iter()
            .zip(grads)
            .map(|(&j, &g)| match self.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    let v = momentum * self.buffers[0][j] as f64 + g;
                    self.buffers[0][j] = v as f32;
                    (-lr * v) as f32
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let m = beta1 * self.buffers[0][j] as f64 + (1.0 - beta1) * g;
                    let v = beta2 * self.buffers[1][j] as f64 + (1.0 - beta2) * g * g;
                    let t = self.buffers[2][j] as f64 + 1.0;
                    self.buffers[0][j] = m as f32;
                    self.buffers[1][j] = v as f32;
                    self.buffers[2][j] = t as f32;
                    let m_hat = m / (1.0 - beta1.powf(t));
                    let v_hat = v / (1.0 - beta2.powf(t));
                    (-lr * m_hat / (v_hat.sqrt() + eps)) as f32
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = OptimizerState::new(OptimizerKind::default(), 3);
        assert_eq!(opt.step(&[1], &[1.0], 0.1), vec![-0.1]);
        let d = opt.step(&[1], &[1.0], 0.1)[0];
        assert!((d as f64 + 0.19).abs() < 1e-7);
        assert_eq!(opt.buffers()[0][0], 0.0);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 2);
        let d = opt.step(&[0, 1], &[5.0, -0.01], 0.01);
        assert!((d[0] + 0.01).abs() < 1e-6);
        assert!((d[1] - 0.01).abs() < 1e-5);
    }

    #[test]
    fn zero_lr_never_moves() {
        let mut opt = OptimizerState::new(OptimizerKind::default(), 2);
        assert_eq!(opt.step(&[0, 1], &[3.0, -2.0], 0.0), vec![0.0, 0.0]);
    }
}
