//! Bias-corrected Adam.

use std::collections::HashMap;

use crate::scalar::Scalar;

use super::{shape_mismatch, Gradients, Param, Result, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(1e-3)
    }
}

/// Optimizer state: first/second moment per parameter plus the step counter.
pub struct Adam<T> {
    cfg: AdamConfig,
    step: u64,
    m: HashMap<u64, Tensor<T>>,
    v: HashMap<u64, Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over `params`, reading gradients from `grads`.
    /// Parameters that did not participate in the loss see a zero gradient.
    pub fn step(&mut self, params: &mut [&mut Param<T>], grads: &Gradients<T>) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::cast(self.cfg.beta1);
        let b2 = T::cast(self.cfg.beta2);
        let one = T::one();
        let lr = T::cast(self.cfg.lr);
        let eps = T::cast(self.cfg.eps);
        let corr1 = T::cast(1.0 - self.cfg.beta1.powi(t));
        let corr2 = T::cast(1.0 - self.cfg.beta2.powi(t));

        for p in params.iter_mut() {
            let g = grads.for_param(p);
            if g.shape() != p.value.shape() {
                return Err(shape_mismatch(
                    "adam_step",
                    format!(
                        "grad {:?} vs param `{}` {:?}",
                        g.shape(),
                        p.name(),
                        p.value.shape()
                    ),
                ));
            }
            let key = p.id().raw();
            let m = self
                .m
                .entry(key)
                .or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
            let v = self
                .v
                .entry(key)
                .or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
            let md = m.data_mut();
            let vd = v.data_mut();
            let pd = p.value.data_mut();
            let gd = g.data();
            for i in 0..pd.len() {
                md[i] = b1 * md[i] + (one - b1) * gd[i];
                vd[i] = b2 * vd[i] + (one - b2) * gd[i] * gd[i];
                let m_hat = md[i] / corr1;
                let v_hat = vd[i] / corr2;
                pd[i] = pd[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
