//! Canonical Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{InceptionTime, Scalar};

/// Adam hyperparameters. Defaults follow the training recipe:
/// β1 = 0.9, β2 = 0.999, ε = 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> AdamConfig {
        AdamConfig { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        for (what, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Validation(format!("{what} {b} must lie in [0, 1)")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Validation(format!("eps {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// Optimizer state: first/second moments per parameter tensor, kept in f64
/// and aligned with the model's parameter traversal order.
///
/// Frozen tensors are skipped entirely — no parameter update and no moment
/// decay — but still occupy state slots, so a freeze mask may change
/// between steps (pretrain unfrozen, fine-tune frozen) without
/// misaligning the state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Result<Adam> {
        cfg.validate()?;
        Ok(Adam { cfg, step_count: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update from the gradients currently stored in the model.
    pub fn step<S: Scalar>(&mut self, model: &mut InceptionTime<S>) -> Result<()> {
        if self.m.is_empty() {
            model.for_each_param(&mut |p| {
                self.m.push(vec![0.0; p.data.len()]);
                self.v.push(vec![0.0; p.data.len()]);
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig { learning_rate: lr, beta1, beta2, eps } = self.cfg;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        let (m, v) = (&mut self.m, &mut self.v);
        let mut idx = 0usize;
        let mut mismatch = None;
        model.for_each_param(&mut |p| {
            let Some((m, v)) = m.get_mut(idx).zip(v.get_mut(idx)) else {
                mismatch = Some(format!("no state slot for tensor {}", p.name));
                return;
            };
            idx += 1;
            if m.len() != p.data.len() {
                mismatch = Some(format!(
                    "state slot for {} has {} entries, tensor has {}",
                    p.name,
                    m.len(),
                    p.data.len()
                ));
                return;
            }
            if p.frozen {
                return;
            }
            for i in 0..p.data.len() {
                let g = p.grad[i].as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                let w = p.data[i].as_f64() - lr * m_hat / (v_hat.sqrt() + eps);
                p.data[i] = S::from_f64(w);
            }
        });
        if idx != self.m.len() {
            mismatch.get_or_insert_with(|| {
                format!("model has {idx} tensors, optimizer state has {}", self.m.len())
            });
        }
        match mismatch {
            Some(msg) => Err(Error::Contract(format!("adam state misaligned: {msg}"))),
            None => Ok(()),
        }
    }
}
