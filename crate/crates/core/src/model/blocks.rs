//! Model building blocks: conv + batchnorm + activation units, inverted
//! residual blocks, global average pooling, and dense head layers.
//!
//! Each block owns its parameters and provides three passes:
//! `forward_eval` (shared, immutable), `forward_train` (returns a cache of
//! the inputs each backward step needs), and `backward` (consumes the cache,
//! returns input gradients plus named parameter gradients).
//!
//! A frozen block runs its batch norm in eval mode during training, so every
//! backbone tensor — including running statistics — stays bit-identical
//! across a training run.

use crate::error::Result;
use crate::nn::{
    batchnorm_backward, batchnorm_eval_backward, batchnorm_forward, conv2d_backward,
    conv2d_forward, dense_backward, dense_forward, Activation, BatchNormState, BnMode, ConvSpec,
};
use crate::tensor::Tensor;

/// Convolution (bias-free) followed by batch norm and an activation.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub spec: ConvSpec,
    pub weight: Tensor,
    pub bn: BatchNormState,
    pub activation: Activation,
}

#[derive(Debug)]
pub struct ConvBnCache {
    x: Tensor,
    conv_out: Tensor,
    bn_out: Tensor,
    frozen: bool,
}

impl ConvBn {
    fn zero_bias(&self) -> Tensor {
        Tensor::zeros(&[self.spec.out_channels])
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let z = conv2d_forward(x, &self.spec, &self.weight, &self.zero_bias(), Activation::Linear)?;
        let mut state = self.bn.clone();
        let z = batchnorm_forward(&z, &mut state, BnMode::Eval)?;
        Ok(self.activation.apply(&z))
    }

    pub fn forward_train(&mut self, x: &Tensor, frozen: bool) -> Result<(Tensor, ConvBnCache)> {
        let conv_out =
            conv2d_forward(x, &self.spec, &self.weight, &self.zero_bias(), Activation::Linear)?;
        let mode = if frozen { BnMode::Eval } else { BnMode::Train };
        let bn_out = batchnorm_forward(&conv_out, &mut self.bn, mode)?;
        let y = self.activation.apply(&bn_out);
        Ok((
            y,
            ConvBnCache {
                x: x.clone(),
                conv_out,
                bn_out,
                frozen,
            },
        ))
    }

    /// Returns `d_input` and `(suffix, grad)` pairs for `conv.weight`,
    /// `bn.gamma`, `bn.beta`.
    pub fn backward(&self, cache: &ConvBnCache, upstream: &Tensor) -> Result<(Tensor, Vec<(String, Tensor)>)> {
        // Through the activation.
        let mut d_bn_out = upstream.clone();
        for (g, &z) in d_bn_out.data_mut().iter_mut().zip(cache.bn_out.data()) {
            *g *= self.activation.grad_scalar(z);
        }
        // Through batch norm (eval-mode path when the block ran frozen).
        let bn_grads = if cache.frozen {
            batchnorm_eval_backward(&cache.conv_out, &self.bn, &d_bn_out)?
        } else {
            batchnorm_backward(&cache.conv_out, &self.bn, &d_bn_out)?
        };
        // Through the convolution.
        let conv_grads = conv2d_backward(
            &cache.x,
            &self.spec,
            &self.weight,
            &self.zero_bias(),
            Activation::Linear,
            &bn_grads.d_input,
        )?;
        let mut params = Vec::with_capacity(3);
        params.push(("conv.weight".to_string(), conv_grads.d_params[0].1.clone()));
        for (name, grad) in bn_grads.d_params {
            params.push((format!("bn.{name}"), grad));
        }
        Ok((conv_grads.d_input, params))
    }

    /// (name, tensor) pairs: trainable parameters then running buffers.
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(format!("{prefix}.conv.weight"), &self.weight);
        f(format!("{prefix}.bn.gamma"), &self.bn.gamma);
        f(format!("{prefix}.bn.beta"), &self.bn.beta);
        f(format!("{prefix}.bn.running_mean"), &self.bn.running_mean);
        f(format!("{prefix}.bn.running_var"), &self.bn.running_var);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.conv.weight"), &mut self.weight);
        f(format!("{prefix}.bn.gamma"), &mut self.bn.gamma);
        f(format!("{prefix}.bn.beta"), &mut self.bn.beta);
        f(format!("{prefix}.bn.running_mean"), &mut self.bn.running_mean);
        f(format!("{prefix}.bn.running_var"), &mut self.bn.running_var);
    }

    /// Trainable parameter slots (excludes running statistics).
    pub fn trainable_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![
            (format!("{prefix}.conv.weight"), &mut self.weight),
            (format!("{prefix}.bn.gamma"), &mut self.bn.gamma),
            (format!("{prefix}.bn.beta"), &mut self.bn.beta),
        ]
    }

    pub fn trainable_count(&self) -> usize {
        self.weight.len() + self.bn.gamma.len() + self.bn.beta.len()
    }
}

/// MobileNetV2 inverted residual: 1x1 expand (when the expansion factor is
/// above 1), 3x3 depthwise, 1x1 linear projection, with a skip connection
/// when the stride is 1 and channel counts match.
#[derive(Debug, Clone)]
pub struct InvertedResidual {
    pub expand: Option<ConvBn>,
    pub depthwise: ConvBn,
    pub project: ConvBn,
    pub use_skip: bool,
}

#[derive(Debug)]
pub struct BlockCache {
    expand: Option<ConvBnCache>,
    depthwise: ConvBnCache,
    project: ConvBnCache,
}

impl InvertedResidual {
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = match &self.expand {
            Some(e) => e.forward_eval(x)?,
            None => x.clone(),
        };
        h = self.depthwise.forward_eval(&h)?;
        h = self.project.forward_eval(&h)?;
        if self.use_skip {
            h = h.add(x)?;
        }
        Ok(h)
    }

    pub fn forward_train(&mut self, x: &Tensor, frozen: bool) -> Result<(Tensor, BlockCache)> {
        let (h, expand_cache) = match &mut self.expand {
            Some(e) => {
                let (h, c) = e.forward_train(x, frozen)?;
                (h, Some(c))
            }
            None => (x.clone(), None),
        };
        let (h, dw_cache) = self.depthwise.forward_train(&h, frozen)?;
        let (mut h, proj_cache) = self.project.forward_train(&h, frozen)?;
        if self.use_skip {
            h = h.add(x)?;
        }
        Ok((
            h,
            BlockCache {
                expand: expand_cache,
                depthwise: dw_cache,
                project: proj_cache,
            },
        ))
    }

    pub fn backward(&self, cache: &BlockCache, upstream: &Tensor) -> Result<(Tensor, Vec<(String, Tensor)>)> {
        let mut params = Vec::new();
        let (d, proj_params) = self.project.backward(&cache.project, upstream)?;
        for (n, g) in proj_params {
            params.push((format!("project.{n}"), g));
        }
        let (d, dw_params) = self.depthwise.backward(&cache.depthwise, &d)?;
        for (n, g) in dw_params {
            params.push((format!("depthwise.{n}"), g));
        }
        let mut d_input = match (&self.expand, &cache.expand) {
            (Some(e), Some(c)) => {
                let (d, e_params) = e.backward(c, &d)?;
                for (n, g) in e_params {
                    params.push((format!("expand.{n}"), g));
                }
                d
            }
            _ => d,
        };
        if self.use_skip {
            d_input = d_input.add(upstream)?;
        }
        Ok((d_input, params))
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        if let Some(e) = &self.expand {
            e.visit(&format!("{prefix}.expand"), f);
        }
        self.depthwise.visit(&format!("{prefix}.depthwise"), f);
        self.project.visit(&format!("{prefix}.project"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        if let Some(e) = &mut self.expand {
            e.visit_mut(&format!("{prefix}.expand"), f);
        }
        self.depthwise.visit_mut(&format!("{prefix}.depthwise"), f);
        self.project.visit_mut(&format!("{prefix}.project"), f);
    }

    pub fn trainable_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.expand {
            out.extend(e.trainable_mut(&format!("{prefix}.expand")));
        }
        out.extend(self.depthwise.trainable_mut(&format!("{prefix}.depthwise")));
        out.extend(self.project.trainable_mut(&format!("{prefix}.project")));
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.expand.as_ref().map_or(0, |e| e.trainable_count())
            + self.depthwise.trainable_count()
            + self.project.trainable_count()
    }
}

/// Mean over the spatial axes: `[N, H, W, C] -> [N, C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let d = x.dims();
    let (n, h, w, c) = (d[0], d[1], d[2], d[3]);
    let mut out = vec![0.0f32; n * c];
    for ni in 0..n {
        for ch in 0..c {
            let mut acc = 0.0f32;
            for p in 0..h * w {
                acc += x.data()[(ni * h * w + p) * c + ch];
            }
            out[ni * c + ch] = acc / (h * w) as f32;
        }
    }
    Tensor::new(&[n, c], out)
}

/// Backward of [`global_avg_pool`]: spread the gradient uniformly.
pub fn global_avg_pool_backward(in_dims: &[usize], upstream: &Tensor) -> Result<Tensor> {
    let (n, h, w, c) = (in_dims[0], in_dims[1], in_dims[2], in_dims[3]);
    let scale = 1.0 / (h * w) as f32;
    let mut dx = vec![0.0f32; n * h * w * c];
    for ni in 0..n {
        for p in 0..h * w {
            for ch in 0..c {
                dx[(ni * h * w + p) * c + ch] = upstream.data()[ni * c + ch] * scale;
            }
        }
    }
    Tensor::new(in_dims, dx)
}

/// Dense layer with bias and activation, used in the classifier head.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug)]
pub struct DenseCache {
    x: Tensor,
    z: Tensor,
}

impl DenseLayer {
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.activation.apply(&dense_forward(x, &self.weight, &self.bias)?))
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let z = dense_forward(x, &self.weight, &self.bias)?;
        let y = self.activation.apply(&z);
        Ok((
            y,
            DenseCache {
                x: x.clone(),
                z,
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &Tensor) -> Result<(Tensor, Vec<(String, Tensor)>)> {
        let mut dz = upstream.clone();
        for (g, &z) in dz.data_mut().iter_mut().zip(cache.z.data()) {
            *g *= self.activation.grad_scalar(z);
        }
        let grads = dense_backward(&cache.x, &self.weight, &dz)?;
        Ok((grads.d_input, grads.d_params))
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }

    pub fn trainable_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![
            (format!("{prefix}.weight"), &mut self.weight),
            (format!("{prefix}.bias"), &mut self.bias),
        ]
    }

    pub fn trainable_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
