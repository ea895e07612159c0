//! Per-channel batch normalization over `[N, H, W, C]` (or `[N, C]`) inputs.
//!
//! Train mode normalizes with the current batch's mean and (biased) variance
//! and folds those statistics into the running estimates:
//! `running <- (1 - momentum) * running + momentum * batch`. Eval mode uses
//! the running estimates and never mutates state. Running variance stores the
//! same biased batch variance used for normalization.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::LayerGrad;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f32,
    pub epsilon: f32,
}

impl BatchNormState {
    /// Identity-initialized state: gamma 1, beta 0, mean 0, var 1.
    pub fn new(channels: usize, momentum: f32, epsilon: f32) -> Result<Self> {
        if !(0.0 < momentum && momentum < 1.0) {
            return Err(Error::Config(format!(
                "batchnorm momentum must be in (0,1), got {momentum}"
            )));
        }
        if epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "batchnorm epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(BatchNormState {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            momentum,
            epsilon,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Splits the input into (rows, channels): channels are the last axis,
/// everything else is reduced over.
fn geometry(x: &Tensor, state: &BatchNormState) -> Result<(usize, usize)> {
    let dims = x.dims();
    if dims.is_empty() {
        return Err(Error::Shape("batchnorm input must have rank >= 1".into()));
    }
    let c = *dims.last().unwrap();
    if c != state.channels() {
        return Err(Error::Shape(format!(
            "batchnorm input has {c} channels, state has {}",
            state.channels()
        )));
    }
    Ok((x.len() / c, c))
}

/// Per-channel batch mean and biased variance.
fn batch_stats(x: &Tensor, rows: usize, c: usize) -> (Vec<f32>, Vec<f32>) {
    let xs = x.data();
    let mut mean = vec![0.0f32; c];
    for r in 0..rows {
        for ch in 0..c {
            mean[ch] += xs[r * c + ch];
        }
    }
    for m in &mut mean {
        *m /= rows as f32;
    }
    let mut var = vec![0.0f32; c];
    for r in 0..rows {
        for ch in 0..c {
            let d = xs[r * c + ch] - mean[ch];
            var[ch] += d * d;
        }
    }
    for v in &mut var {
        *v /= rows as f32;
    }
    (mean, var)
}

fn normalize_with(
    x: &Tensor,
    state: &BatchNormState,
    mean: &[f32],
    var: &[f32],
) -> Result<Tensor> {
    let c = state.channels();
    let gamma = state.gamma.data();
    let beta = state.beta.data();
    let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + state.epsilon).sqrt()).collect();
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let ch = i % c;
        *v = gamma[ch] * (*v - mean[ch]) * inv_std[ch] + beta[ch];
    }
    Ok(out)
}

pub fn batchnorm_forward(x: &Tensor, state: &mut BatchNormState, mode: BnMode) -> Result<Tensor> {
    let (rows, c) = geometry(x, state)?;
    match mode {
        BnMode::Eval => normalize_with(x, state, state.running_mean.data(), state.running_var.data()),
        BnMode::Train => {
            let (mean, var) = batch_stats(x, rows, c);
            let out = normalize_with(x, state, &mean, &var)?;
            let m = state.momentum;
            for (r, &b) in state.running_mean.data_mut().iter_mut().zip(&mean) {
                *r = (1.0 - m) * *r + m * b;
            }
            for (r, &b) in state.running_var.data_mut().iter_mut().zip(&var) {
                *r = (1.0 - m) * *r + m * b;
            }
            Ok(out)
        }
    }
}

/// Train-mode backward: gradients flow through the batch statistics.
pub fn batchnorm_backward(x: &Tensor, state: &BatchNormState, upstream: &Tensor) -> Result<LayerGrad> {
    let (rows, c) = geometry(x, state)?;
    if upstream.dims() != x.dims() {
        return Err(Error::Shape(format!(
            "batchnorm upstream shape {} does not match input {}",
            upstream.shape(),
            x.shape()
        )));
    }
    let (mean, var) = batch_stats(x, rows, c);
    let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + state.epsilon).sqrt()).collect();
    let xs = x.data();
    let dys = upstream.data();
    let gamma = state.gamma.data();

    // Per-channel sums of dy and dy * xhat.
    let mut sum_dy = vec![0.0f32; c];
    let mut sum_dy_xhat = vec![0.0f32; c];
    for r in 0..rows {
        for ch in 0..c {
            let i = r * c + ch;
            let xhat = (xs[i] - mean[ch]) * inv_std[ch];
            sum_dy[ch] += dys[i];
            sum_dy_xhat[ch] += dys[i] * xhat;
        }
    }

    let m = rows as f32;
    let mut dx = vec![0.0f32; xs.len()];
    for r in 0..rows {
        for ch in 0..c {
            let i = r * c + ch;
            let xhat = (xs[i] - mean[ch]) * inv_std[ch];
            dx[i] = gamma[ch] * inv_std[ch] / m
                * (m * dys[i] - sum_dy[ch] - xhat * sum_dy_xhat[ch]);
        }
    }

    Ok(LayerGrad {
        d_input: Tensor::new(x.dims(), dx)?,
        d_params: vec![
            ("gamma".into(), Tensor::new(&[c], sum_dy_xhat)?),
            ("beta".into(), Tensor::new(&[c], sum_dy)?),
        ],
    })
}

/// Eval-mode backward: the running statistics are constants, so the layer is
/// a per-channel affine map. Used when a frozen backbone still needs to pass
/// gradients through.
pub fn batchnorm_eval_backward(
    x: &Tensor,
    state: &BatchNormState,
    upstream: &Tensor,
) -> Result<LayerGrad> {
    let (rows, c) = geometry(x, state)?;
    if upstream.dims() != x.dims() {
        return Err(Error::Shape(format!(
            "batchnorm upstream shape {} does not match input {}",
            upstream.shape(),
            x.shape()
        )));
    }
    let gamma = state.gamma.data();
    let mean = state.running_mean.data();
    let inv_std: Vec<f32> = state
        .running_var
        .data()
        .iter()
        .map(|&v| 1.0 / (v + state.epsilon).sqrt())
        .collect();
    let xs = x.data();
    let dys = upstream.data();
    let mut dx = vec![0.0f32; xs.len()];
    let mut sum_dy = vec![0.0f32; c];
    let mut sum_dy_xhat = vec![0.0f32; c];
    for r in 0..rows {
        for ch in 0..c {
            let i = r * c + ch;
            dx[i] = dys[i] * gamma[ch] * inv_std[ch];
            sum_dy[ch] += dys[i];
            sum_dy_xhat[ch] += dys[i] * (xs[i] - mean[ch]) * inv_std[ch];
        }
    }
    Ok(LayerGrad {
        d_input: Tensor::new(x.dims(), dx)?,
        d_params: vec![
            ("gamma".into(), Tensor::new(&[c], sum_dy_xhat)?),
            ("beta".into(), Tensor::new(&[c], sum_dy)?),
        ],
    })
}
