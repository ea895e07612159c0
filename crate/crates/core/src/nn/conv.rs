//! 2D convolution, regular and depthwise, forward and backward.
//!
//! Layouts are channels-last throughout: inputs `[N, H, W, Cin]`, regular
//! kernels `[kh, kw, Cin, Cout]`, depthwise kernels `[kh, kw, Cin, M]` with
//! output channel `ci * M + m`. "Same" padding follows the ceil(in/stride)
//! convention with the smaller pad before (top/left).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Activation, LayerGrad};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
    pub depthwise: bool,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        depthwise: bool,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 {
            return Err(Error::Shape("conv dims must be positive".into()));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape("conv stride must be positive".into()));
        }
        if depthwise && out_channels % in_channels != 0 {
            return Err(Error::Shape(format!(
                "depthwise out_channels {out_channels} not a multiple of in_channels {in_channels}"
            )));
        }
        Ok(ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            depthwise,
        })
    }

    /// Channel multiplier for depthwise convs (out / in).
    pub fn multiplier(&self) -> usize {
        if self.depthwise {
            self.out_channels / self.in_channels
        } else {
            1
        }
    }

    /// Expected kernel tensor dims for this spec.
    pub fn weight_dims(&self) -> Vec<usize> {
        let (kh, kw) = self.kernel;
        if self.depthwise {
            vec![kh, kw, self.in_channels, self.multiplier()]
        } else {
            vec![kh, kw, self.in_channels, self.out_channels]
        }
    }

    /// Output spatial size and pad-before offsets for an input of `(h, w)`.
    pub fn out_geometry(&self, h: usize, w: usize) -> Result<(usize, usize, usize, usize)> {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        match self.padding {
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::Shape(format!(
                        "valid conv kernel {kh}x{kw} larger than input {h}x{w}"
                    )));
                }
                Ok(((h - kh) / sh + 1, (w - kw) / sw + 1, 0, 0))
            }
            Padding::Same => {
                let oh = h.div_ceil(sh);
                let ow = w.div_ceil(sw);
                let pad_h = ((oh - 1) * sh + kh).saturating_sub(h);
                let pad_w = ((ow - 1) * sw + kw).saturating_sub(w);
                Ok((oh, ow, pad_h / 2, pad_w / 2))
            }
        }
    }
}

fn validate(x: &Tensor, spec: &ConvSpec, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let xd = x.dims();
    if xd.len() != 4 {
        return Err(Error::Shape(format!(
            "conv input must be [N,H,W,C], got {}",
            x.shape()
        )));
    }
    if xd[3] != spec.in_channels {
        return Err(Error::Shape(format!(
            "conv input has {} channels, spec expects {}",
            xd[3], spec.in_channels
        )));
    }
    if w.dims() != spec.weight_dims().as_slice() {
        return Err(Error::Shape(format!(
            "conv kernel shape {} does not match spec {:?}",
            w.shape(),
            spec.weight_dims()
        )));
    }
    if b.dims() != [spec.out_channels] {
        return Err(Error::Shape(format!(
            "conv bias shape {} does not match out_channels {}",
            b.shape(),
            spec.out_channels
        )));
    }
    Ok((xd[0], xd[1], xd[2]))
}

/// Convolution + bias without the activation. Shared by forward and backward.
fn conv_linear(x: &Tensor, spec: &ConvSpec, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, h, wid) = validate(x, spec, w, b)?;
    let (oh, ow, pt, pl) = spec.out_geometry(h, wid)?;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let mult = spec.multiplier();

    let xs = x.data();
    let ws = w.data();
    let mut out = vec![0.0f32; n * oh * ow * cout];
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let o_base = ((ni * oh + oy) * ow + ox) * cout;
                out[o_base..o_base + cout].copy_from_slice(b.data());
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - pt as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pl as isize;
                        if ix < 0 || ix as usize >= wid {
                            continue;
                        }
                        let x_base = ((ni * h + iy as usize) * wid + ix as usize) * cin;
                        if spec.depthwise {
                            let w_base = (ky * kw + kx) * cin * mult;
                            for ci in 0..cin {
                                let xv = xs[x_base + ci];
                                for m in 0..mult {
                                    out[o_base + ci * mult + m] += xv * ws[w_base + ci * mult + m];
                                }
                            }
                        } else {
                            let w_base = (ky * kw + kx) * cin * cout;
                            for ci in 0..cin {
                                let xv = xs[x_base + ci];
                                let w_row = &ws[w_base + ci * cout..w_base + (ci + 1) * cout];
                                let o_row = &mut out[o_base..o_base + cout];
                                for (o, &wv) in o_row.iter_mut().zip(w_row) {
                                    *o += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, oh, ow, cout], out)
}

/// `activation(conv(x, w) + b)`.
pub fn conv2d_forward(
    x: &Tensor,
    spec: &ConvSpec,
    w: &Tensor,
    b: &Tensor,
    activation: Activation,
) -> Result<Tensor> {
    Ok(activation.apply(&conv_linear(x, spec, w, b)?))
}

/// Gradients of the full forward (activation included) given `upstream`
/// gradients of the output. Recomputes the pre-activation from `x`, `w`, `b`.
pub fn conv2d_backward(
    x: &Tensor,
    spec: &ConvSpec,
    w: &Tensor,
    b: &Tensor,
    activation: Activation,
    upstream: &Tensor,
) -> Result<LayerGrad> {
    let (n, h, wid) = validate(x, spec, w, b)?;
    let (oh, ow, pt, pl) = spec.out_geometry(h, wid)?;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let mult = spec.multiplier();
    if upstream.dims() != [n, oh, ow, cout] {
        return Err(Error::Shape(format!(
            "conv upstream shape {} does not match output [{n}, {oh}, {ow}, {cout}]",
            upstream.shape()
        )));
    }

    // dz = upstream * act'(z); linear activation needs no pre-activation pass.
    let dz = if activation == Activation::Linear {
        upstream.clone()
    } else {
        let z = conv_linear(x, spec, w, b)?;
        let mut dz = upstream.clone();
        for (g, &zv) in dz.data_mut().iter_mut().zip(z.data()) {
            *g *= activation.grad_scalar(zv);
        }
        dz
    };

    let xs = x.data();
    let ws = w.data();
    let dzs = dz.data();
    let mut dx = vec![0.0f32; xs.len()];
    let mut dw = vec![0.0f32; ws.len()];
    let mut db = vec![0.0f32; cout];

    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let o_base = ((ni * oh + oy) * ow + ox) * cout;
                let dz_row = &dzs[o_base..o_base + cout];
                for (co, &g) in dz_row.iter().enumerate() {
                    db[co] += g;
                }
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - pt as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pl as isize;
                        if ix < 0 || ix as usize >= wid {
                            continue;
                        }
                        let x_base = ((ni * h + iy as usize) * wid + ix as usize) * cin;
                        if spec.depthwise {
                            let w_base = (ky * kw + kx) * cin * mult;
                            for ci in 0..cin {
                                let xv = xs[x_base + ci];
                                let mut acc = 0.0f32;
                                for m in 0..mult {
                                    let g = dz_row[ci * mult + m];
                                    dw[w_base + ci * mult + m] += xv * g;
                                    acc += ws[w_base + ci * mult + m] * g;
                                }
                                dx[x_base + ci] += acc;
                            }
                        } else {
                            let w_base = (ky * kw + kx) * cin * cout;
                            for ci in 0..cin {
                                let xv = xs[x_base + ci];
                                let w_row = &ws[w_base + ci * cout..w_base + (ci + 1) * cout];
                                let dw_row = &mut dw[w_base + ci * cout..w_base + (ci + 1) * cout];
                                let mut acc = 0.0f32;
                                for co in 0..cout {
                                    let g = dz_row[co];
                                    dw_row[co] += xv * g;
                                    acc += w_row[co] * g;
                                }
                                dx[x_base + ci] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(LayerGrad {
        d_input: Tensor::new(x.dims(), dx)?,
        d_params: vec![
            ("weight".into(), Tensor::new(w.dims(), dw)?),
            ("bias".into(), Tensor::new(&[cout], db)?),
        ],
    })
}
