//! Training-time augmentation: rotation, uniform scaling, horizontal flip.
//!
//! All transforms run on raw `[H, W, C]` pixel images before normalization
//! and never change the image dimensions. Randomness comes from a per-sample
//! stream derived from `(seed, epoch, sample_index)`, so prefetch or batch
//! order cannot change results. Draw order is fixed: angle, scale, flip.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Maximum absolute rotation in degrees; the angle is uniform in
    /// `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f32,
    /// Uniform scale factor range (min, max), both positive.
    pub scale_range: (f32, f32),
    /// Probability of a horizontal flip.
    pub hflip_prob: f64,
    /// Root seed for the per-sample streams.
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_deg: 15.0,
            scale_range: (0.9, 1.1),
            hflip_prob: 0.5,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rotation_deg < 0.0 {
            return Err(Error::Config(format!(
                "rotation_deg must be >= 0, got {}",
                self.rotation_deg
            )));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi > 0.0 && lo <= hi) {
            return Err(Error::Config(format!(
                "scale_range must satisfy 0 < min <= max, got ({lo}, {hi})"
            )));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config(format!(
                "hflip_prob must be in [0, 1], got {}",
                self.hflip_prob
            )));
        }
        Ok(())
    }

    /// An identity config: no rotation, no scaling, no flips.
    pub fn identity() -> Self {
        AugmentConfig {
            rotation_deg: 0.0,
            scale_range: (1.0, 1.0),
            hflip_prob: 0.0,
            seed: 0,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a root seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix(seed ^ splitmix(stream))
}

/// Deterministic per-sample RNG stream for `(seed, epoch, sample_index)`.
pub fn sample_stream(seed: u64, epoch: u64, sample_index: u64) -> ChaCha8Rng {
    let mixed = splitmix(seed ^ splitmix(epoch ^ splitmix(sample_index)));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Bilinear lookup with edge-pixel padding.
fn sample_clamped(src: &[f32], h: usize, w: usize, c: usize, y: f32, x: f32, ch: usize) -> f32 {
    let yc = y.clamp(0.0, (h - 1) as f32);
    let xc = x.clamp(0.0, (w - 1) as f32);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = yc - y0 as f32;
    let fx = xc - x0 as f32;
    let p00 = src[(y0 * w + x0) * c + ch];
    let p01 = src[(y0 * w + x1) * c + ch];
    let p10 = src[(y1 * w + x0) * c + ch];
    let p11 = src[(y1 * w + x1) * c + ch];
    let top = p00 + (p01 - p00) * fx;
    let bottom = p10 + (p11 - p10) * fx;
    top + (bottom - top) * fy
}

/// Inverse-mapped warp: for each output pixel, rotate by `-angle` and divide
/// by `scale` about the image center, then sample with edge padding.
fn warp(image: &Tensor, angle_rad: f32, scale: f32) -> Tensor {
    let dims = image.dims();
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    let (cy, cx) = ((h - 1) as f32 / 2.0, (w - 1) as f32 / 2.0);
    let (sin, cos) = (-angle_rad).sin_cos();
    let src = image.data();
    let mut out = vec![0.0f32; src.len()];
    for oy in 0..h {
        for ox in 0..w {
            let dy = (oy as f32 - cy) / scale;
            let dx = (ox as f32 - cx) / scale;
            let sy = cy + dy * cos - dx * sin;
            let sx = cx + dy * sin + dx * cos;
            for ch in 0..c {
                out[(oy * w + ox) * c + ch] = sample_clamped(src, h, w, c, sy, sx, ch);
            }
        }
    }
    Tensor::new(dims, out).expect("warp preserves shape")
}

/// Mirrors columns; exact (a pure permutation of pixels).
pub fn hflip(image: &Tensor) -> Tensor {
    let dims = image.dims();
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    let src = image.data();
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let m = w - 1 - x;
            out[(y * w + x) * c..(y * w + x) * c + c]
                .copy_from_slice(&src[(y * w + m) * c..(y * w + m) * c + c]);
        }
    }
    Tensor::new(dims, out).expect("hflip preserves shape")
}

/// Applies rotation, scaling, then an optional horizontal flip, drawing from
/// `rng` in that fixed order. Identity settings skip the resampling entirely
/// so they reproduce the input exactly.
pub fn augment(image: &Tensor, config: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    config.validate()?;
    if image.dims().len() != 3 {
        return Err(Error::Shape(format!(
            "augment expects [H, W, C], got {}",
            image.shape()
        )));
    }
    let angle = if config.rotation_deg > 0.0 {
        rng.random_range(-config.rotation_deg..=config.rotation_deg)
    } else {
        0.0
    };
    let (lo, hi) = config.scale_range;
    let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let flip = config.hflip_prob > 0.0 && rng.random_bool(config.hflip_prob);

    let mut out = if angle != 0.0 {
        warp(image, angle.to_radians(), 1.0)
    } else {
        image.clone()
    };
    if scale != 1.0 {
        out = warp(&out, 0.0, scale);
    }
    if flip {
        out = hflip(&out);
    }
    Ok(out)
}
