//! Corner-aligned bilinear resize.
//!
//! Source coordinates map as `src = dst * (src_len - 1) / (dst_len - 1)`, so
//! the four image corners map onto each other exactly and resizing to the
//! same size reproduces the input bit for bit. A single-pixel target samples
//! the origin corner.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn resize_bilinear(image: &Tensor, target_h: usize, target_w: usize) -> Result<Tensor> {
    let dims = image.dims();
    if dims.len() != 3 {
        return Err(Error::Shape(format!(
            "resize expects [H, W, C], got {}",
            image.shape()
        )));
    }
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    if target_h == 0 || target_w == 0 {
        return Err(Error::Shape("resize target must be at least 1x1".into()));
    }
    if h == target_h && w == target_w {
        return Ok(image.clone());
    }
    let scale_y = if target_h > 1 {
        (h - 1) as f32 / (target_h - 1) as f32
    } else {
        0.0
    };
    let scale_x = if target_w > 1 {
        (w - 1) as f32 / (target_w - 1) as f32
    } else {
        0.0
    };
    let src = image.data();
    let mut out = vec![0.0f32; target_h * target_w * c];
    for oy in 0..target_h {
        let sy = oy as f32 * scale_y;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f32;
        for ox in 0..target_w {
            let sx = ox as f32 * scale_x;
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f32;
            for ch in 0..c {
                let p00 = src[(y0 * w + x0) * c + ch];
                let p01 = src[(y0 * w + x1) * c + ch];
                let p10 = src[(y1 * w + x0) * c + ch];
                let p11 = src[(y1 * w + x1) * c + ch];
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                out[(oy * target_w + ox) * c + ch] = top + (bottom - top) * fy;
            }
        }
    }
    Tensor::new(&[target_h, target_w, c], out)
}
