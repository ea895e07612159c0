//! Parameter updates: bias-corrected Adam and plain SGD.
//!
//! Callers hand in the trainable (unfrozen) parameters with their gradients;
//! frozen parameters never reach the optimizer.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f32) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

/// Per-parameter first/second moments keyed by parameter name, plus the
/// shared step counter. Moments are created lazily on first sight of a name.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over aligned (name, param, grad) triples. The step
    /// counter increments exactly once per call.
    pub fn step(&mut self, params: &mut [(&str, &mut Tensor)], grads: &[(&str, &Tensor)]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "adam: {} params but {} grads",
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - (c.beta1 as f64).powi(self.step as i32);
        let bc2 = 1.0 - (c.beta2 as f64).powi(self.step as i32);

        for ((name, param), (gname, grad)) in params.iter_mut().zip(grads) {
            if name != gname {
                return Err(Error::Shape(format!(
                    "adam: param {name} paired with grad {gname}"
                )));
            }
            if param.dims() != grad.dims() {
                return Err(Error::Shape(format!(
                    "adam: param {name} shape {} vs grad shape {}",
                    param.shape(),
                    grad.shape()
                )));
            }
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(param.dims()), Tensor::zeros(param.dims())));
            let ms = m.data_mut();
            let vs = v.data_mut();
            let ps = param.data_mut();
            for i in 0..ps.len() {
                let g = grad.data()[i];
                ms[i] = c.beta1 * ms[i] + (1.0 - c.beta1) * g;
                vs[i] = c.beta2 * vs[i] + (1.0 - c.beta2) * g * g;
                let m_hat = ms[i] as f64 / bc1;
                let v_hat = vs[i] as f64 / bc2;
                ps[i] -= (c.lr as f64 * m_hat / (v_hat.sqrt() + c.epsilon as f64)) as f32;
            }
        }
        Ok(())
    }
}

/// `w <- w - lr * g` over aligned pairs.
pub fn sgd_step(params: &mut [(&str, &mut Tensor)], grads: &[(&str, &Tensor)], lr: f32) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "sgd: {} params but {} grads",
            params.len(),
            grads.len()
        )));
    }
    for ((name, param), (gname, grad)) in params.iter_mut().zip(grads) {
        if name != gname || param.dims() != grad.dims() {
            return Err(Error::Shape(format!(
                "sgd: misaligned param {name} / grad {gname}"
            )));
        }
        for (p, &g) in param.data_mut().iter_mut().zip(grad.data()) {
            *p -= lr * g;
        }
    }
    Ok(())
}
