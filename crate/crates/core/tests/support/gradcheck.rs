//! Finite-difference gradient check runners, shared by the gradient test
//! suite and the acceptance suite.
//!
//! Each case builds a random small instance, computes the implementation
//! gradients under a random upstream weighting `c` (the checked scalar is
//! `L = sum(c * forward)`), and compares them against central finite
//! differences of an independent 64-bit oracle forward. Inputs are redrawn if
//! a pre-activation sits within 0.02 of a ReLU/ReLU6 kink, where finite
//! differences are meaningless.

use rand::prelude::*;
use sentinel_core::nn::{
    batchnorm_backward, conv2d_backward, cross_entropy, dense_backward, softmax, Activation,
    BatchNormState, ConvSpec, Padding, Reduction,
};
use sentinel_core::Tensor;

use super::{fd_gradient, max_rel_err, oracle, random_vec, rng, to_f64};

pub const FD_H: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Linear => 0,
        Activation::Relu => 1,
        Activation::Relu6 => 6,
    }
}

/// Max relative error across d_input, d_weight, d_bias for one random conv
/// instance. `depthwise` selects the per-channel variant.
pub fn conv_case(seed: u64, depthwise: bool) -> f64 {
    let mut r = rng(seed.wrapping_mul(0x9e37_79b9).wrapping_add(depthwise as u64));
    let n = r.random_range(1..=2usize);
    let h = r.random_range(4..=6usize);
    let w = r.random_range(4..=6usize);
    let cin = r.random_range(1..=3usize);
    let k = *[1usize, 3].choose(&mut r).unwrap();
    let stride = *[1usize, 2].choose(&mut r).unwrap();
    let padding = if r.random_bool(0.5) { Padding::Same } else { Padding::Valid };
    let activation = *[Activation::Linear, Activation::Relu, Activation::Relu6]
        .choose(&mut r)
        .unwrap();
    let cout = if depthwise {
        cin * r.random_range(1..=2usize)
    } else {
        r.random_range(1..=4usize)
    };
    let spec = ConvSpec::new(cin, cout, (k, k), (stride, stride), padding, depthwise).unwrap();
    let same = padding == Padding::Same;

    // Redraw until no pre-activation is near an activation kink.
    let (x, wgt, bias) = loop {
        let x = Tensor::new(&[n, h, w, cin], random_vec(&mut r, n * h * w * cin, -1.0, 1.0)).unwrap();
        let wgt = Tensor::new(
            &spec.weight_dims(),
            random_vec(&mut r, spec.weight_dims().iter().product(), -0.6, 0.6),
        )
        .unwrap();
        let bias = Tensor::new(&[cout], random_vec(&mut r, cout, -0.3, 0.3)).unwrap();
        let (z, _, _) = oracle::conv2d(
            &to_f64(x.data()),
            n,
            h,
            w,
            cin,
            &to_f64(wgt.data()),
            k,
            k,
            cout,
            &to_f64(bias.data()),
            stride,
            stride,
            same,
            depthwise,
            0,
        );
        let clear = match activation {
            Activation::Linear => true,
            Activation::Relu => z.iter().all(|&v| v.abs() > 0.02),
            Activation::Relu6 => z.iter().all(|&v| v.abs() > 0.02 && (v - 6.0).abs() > 0.02),
        };
        if clear {
            break (x, wgt, bias);
        }
    };

    let (oh, ow, _, _) = spec.out_geometry(h, w).unwrap();
    let up = Tensor::new(&[n, oh, ow, cout], random_vec(&mut r, n * oh * ow * cout, -1.0, 1.0)).unwrap();
    let grads = conv2d_backward(&x, &spec, &wgt, &bias, activation, &up).unwrap();

    let up64 = to_f64(up.data());
    let loss = |xs: &[f64], ws: &[f64], bs: &[f64]| -> f64 {
        let (y, _, _) = oracle::conv2d(
            xs,
            n,
            h,
            w,
            cin,
            ws,
            k,
            k,
            cout,
            bs,
            stride,
            stride,
            same,
            depthwise,
            act_code(activation),
        );
        y.iter().zip(&up64).map(|(a, b)| a * b).sum()
    };

    let (x64, w64, b64) = (to_f64(x.data()), to_f64(wgt.data()), to_f64(bias.data()));
    let fd_x = fd_gradient(&x64, FD_H, |t| loss(t, &w64, &b64));
    let fd_w = fd_gradient(&w64, FD_H, |t| loss(&x64, t, &b64));
    let fd_b = fd_gradient(&b64, FD_H, |t| loss(&x64, &w64, t));

    let e_x = max_rel_err(grads.d_input.data(), &fd_x);
    let e_w = max_rel_err(grads.d_params[0].1.data(), &fd_w);
    let e_b = max_rel_err(grads.d_params[1].1.data(), &fd_b);
    e_x.max(e_w).max(e_b)
}

/// Max relative error across d_input, d_gamma, d_beta for train-mode
/// batch normalization.
pub fn batchnorm_case(seed: u64) -> f64 {
    let mut r = rng(seed.wrapping_mul(0x51_7c_c1).wrapping_add(11));
    let rows = r.random_range(6..=10usize);
    let c = r.random_range(1..=4usize);
    let epsilon = 1e-5f32;

    let x = loop {
        let x = Tensor::new(&[rows, c], random_vec(&mut r, rows * c, -2.0, 2.0)).unwrap();
        // Keep per-channel variance comfortably away from zero.
        let ok = (0..c).all(|ch| {
            let col: Vec<f32> = (0..rows).map(|i| x.data()[i * c + ch]).collect();
            let m = col.iter().sum::<f32>() / rows as f32;
            col.iter().map(|v| (v - m).powi(2)).sum::<f32>() / rows as f32 > 0.1
        });
        if ok {
            break x;
        }
    };
    let mut state = BatchNormState::new(c, 0.1, epsilon).unwrap();
    state.gamma = Tensor::new(&[c], random_vec(&mut r, c, 0.5, 1.5)).unwrap();
    state.beta = Tensor::new(&[c], random_vec(&mut r, c, -0.5, 0.5)).unwrap();
    let up = Tensor::new(&[rows, c], random_vec(&mut r, rows * c, -1.0, 1.0)).unwrap();

    let grads = batchnorm_backward(&x, &state, &up).unwrap();

    let up64 = to_f64(up.data());
    let loss = |xs: &[f64], gs: &[f64], bs: &[f64]| -> f64 {
        oracle::batchnorm_train(xs, c, gs, bs, epsilon as f64)
            .iter()
            .zip(&up64)
            .map(|(a, b)| a * b)
            .sum()
    };
    let (x64, g64, b64) = (
        to_f64(x.data()),
        to_f64(state.gamma.data()),
        to_f64(state.beta.data()),
    );
    let fd_x = fd_gradient(&x64, FD_H, |t| loss(t, &g64, &b64));
    let fd_g = fd_gradient(&g64, FD_H, |t| loss(&x64, t, &b64));
    let fd_b = fd_gradient(&b64, FD_H, |t| loss(&x64, &g64, t));

    let e_x = max_rel_err(grads.d_input.data(), &fd_x);
    let e_g = max_rel_err(grads.d_params[0].1.data(), &fd_g);
    let e_b = max_rel_err(grads.d_params[1].1.data(), &fd_b);
    e_x.max(e_g).max(e_b)
}

/// Max relative error across d_input, d_weight, d_bias for the dense layer.
pub fn dense_case(seed: u64) -> f64 {
    let mut r = rng(seed.wrapping_mul(0xabcd).wrapping_add(7));
    let n = r.random_range(1..=4usize);
    let d = r.random_range(2..=6usize);
    let k = r.random_range(2..=5usize);
    let x = Tensor::new(&[n, d], random_vec(&mut r, n * d, -1.5, 1.5)).unwrap();
    let w = Tensor::new(&[d, k], random_vec(&mut r, d * k, -1.0, 1.0)).unwrap();
    let b = Tensor::new(&[k], random_vec(&mut r, k, -0.5, 0.5)).unwrap();
    let up = Tensor::new(&[n, k], random_vec(&mut r, n * k, -1.0, 1.0)).unwrap();

    let grads = dense_backward(&x, &w, &up).unwrap();

    let up64 = to_f64(up.data());
    let loss = |xs: &[f64], ws: &[f64], bs: &[f64]| -> f64 {
        oracle::dense(xs, n, d, ws, k, bs)
            .iter()
            .zip(&up64)
            .map(|(a, b)| a * b)
            .sum()
    };
    let (x64, w64, b64) = (to_f64(x.data()), to_f64(w.data()), to_f64(b.data()));
    let fd_x = fd_gradient(&x64, FD_H, |t| loss(t, &w64, &b64));
    let fd_w = fd_gradient(&w64, FD_H, |t| loss(&x64, t, &b64));
    let fd_b = fd_gradient(&b64, FD_H, |t| loss(&x64, &w64, t));

    let e_x = max_rel_err(grads.d_input.data(), &fd_x);
    let e_w = max_rel_err(grads.d_params[0].1.data(), &fd_w);
    let e_b = max_rel_err(grads.d_params[1].1.data(), &fd_b);
    e_x.max(e_w).max(e_b)
}

/// Max relative error of the fused softmax + cross-entropy gradient with
/// respect to the logits.
pub fn softmax_ce_case(seed: u64) -> f64 {
    let mut r = rng(seed.wrapping_mul(0x5bd1e995).wrapping_add(3));
    let n = r.random_range(2..=5usize);
    let k = r.random_range(2..=6usize);
    let z = Tensor::new(&[n, k], random_vec(&mut r, n * k, -3.0, 3.0)).unwrap();
    let mut onehot = Tensor::zeros(&[n, k]);
    for i in 0..n {
        let label = r.random_range(0..k);
        onehot.data_mut()[i * k + label] = 1.0;
    }

    let probs = softmax(&z).unwrap();
    let (_, d_logits) = cross_entropy(&probs, &onehot, Reduction::Mean).unwrap();

    let y64 = to_f64(onehot.data());
    let fd = fd_gradient(&to_f64(z.data()), FD_H, |t| {
        oracle::softmax_ce_mean(t, n, k, &y64)
    });
    max_rel_err(d_logits.data(), &fd)
}
