//! Adaptive-moment optimizer over [`Params`].

use serde::{Deserialize, Serialize};

use super::{Params, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("optimizer settings out of range"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Params<F>,
    pub second: Params<F>,
}

impl<F: Real> AdamState<F> {
    pub fn new(config: AdamConfig, like: &Params<F>) -> Self {
        AdamState {
            config,
            step: 0,
            first: Params::zeros_like(like),
            second: Params::zeros_like(like),
        }
    }

    /// One bias-corrected update of `params` in place. `lr_scale` multiplies
    /// the configured learning rate (schedules).
    pub fn update(&mut self, params: &mut Params<F>, grads: &Params<F>, lr_scale: f64) -> Result<()> {
        if grads.tensors().iter().map(|t| t.len()).ne(params.tensors().iter().map(|t| t.len())) {
            return Err(Error::invalid("gradient shapes do not match parameters"));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr = F::of(c.lr * lr_scale * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t)));
        let (b1, b2, eps) = (F::of(c.beta1), F::of(c.beta2), F::of(c.eps));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        let eps_hat = eps * F::of((1.0 - c.beta2.powi(t)).sqrt());
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                p[i] = p[i] - lr * m[i] / (v[i].sqrt() + eps_hat);
            }
        }
        Ok(())
    }
}
