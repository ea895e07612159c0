//! Layer forward/backward passes and the classification loss.
//!
//! These are pure functions over tensors; parameter updates live in
//! [`crate::optim`]. Backward passes recompute the cheap intermediates they
//! need (pre-activations, batch statistics) from the saved layer inputs, so
//! callers only keep each layer's input around.

mod batchnorm;
mod conv;
mod dense;
mod loss;

pub use batchnorm::{batchnorm_backward, batchnorm_eval_backward, batchnorm_forward, BatchNormState, BnMode};
pub use conv::{conv2d_backward, conv2d_forward, ConvSpec, Padding};
pub use dense::{dense_backward, dense_forward};
pub use loss::{cross_entropy, softmax, Reduction};

use crate::tensor::Tensor;

/// Activation applied after a layer's affine part.
///
/// ReLU6 is the backbone default (MobileNetV2 convention); plain ReLU is used
/// in the classifier head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu6,
    Relu,
    Linear,
}

impl Activation {
    pub fn apply_scalar(self, z: f32) -> f32 {
        match self {
            Activation::Relu6 => z.clamp(0.0, 6.0),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative at the pre-activation value `z`.
    pub fn grad_scalar(self, z: f32) -> f32 {
        match self {
            Activation::Relu6 => {
                if z > 0.0 && z < 6.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn apply(self, z: &Tensor) -> Tensor {
        if self == Activation::Linear {
            return z.clone();
        }
        let mut out = z.clone();
        for v in out.data_mut() {
            *v = self.apply_scalar(*v);
        }
        out
    }
}

/// Gradients a layer hands back: one tensor for its input and one per named
/// parameter. Each parameter gradient has exactly the parameter's shape.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub d_input: Tensor,
    pub d_params: Vec<(String, Tensor)>,
}
