//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{GradBuffer, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
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

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            config,
        }
    }
}

pub fn adam_step(param: &mut Tensor, grad: &[f64], s: &mut AdamState) -> Result<()> {
    if grad.len() != param.len() || s.m.len() != param.len() {
        return Err(Error::shape("adam_step", param.shape(), &[grad.len()]));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = s.config;
    s.t += 1;
    let c1 = 1.0 - beta1.powi(s.t as i32);
    let c2 = 1.0 - beta2.powi(s.t as i32);
    for (((p, g), m), v) in param
        .values_mut()
        .iter_mut()
        .zip(grad)
        .zip(s.m.iter_mut())
        .zip(s.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// One [`AdamState`] per parameter of a model, in `params()` order.
#[derive(Debug, Clone)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new<P: Parameterized + ?Sized>(model: &P, config: AdamConfig) -> Self {
        Adam {
            states: model
                .params()
                .iter()
                .map(|(_, t)| AdamState::new(t.len(), config))
                .collect(),
        }
    }

    pub fn step<P: Parameterized + ?Sized>(&mut self, model: &mut P, grads: &GradBuffer) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != self.states.len() || grads.grads.len() != self.states.len() {
            return Err(Error::invalid("optimizer/model parameter count mismatch"));
        }
        for (((_, p), g), s) in params.iter_mut().zip(&grads.grads).zip(&mut self.states) {
            if p.requires_grad() {
                adam_step(p, g, s)?;
            }
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }
}
