//! Shared test support: independent 64-bit oracles, finite-difference
//! gradient checking, a t-distribution quadrature oracle, dataset fixtures,
//! and a brute-force metrics recount.
//!
//! Everything here is deliberately written from the math, not by calling the
//! library code it checks.

#![allow(dead_code)]

pub mod gradcheck;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

// ---------------------------------------------------------------------------
// 64-bit layer oracles (direct-definition implementations)
// ---------------------------------------------------------------------------

pub mod oracle {
    /// Activation codes: 0 = linear, 1 = relu, 6 = relu6.
    pub fn act(code: u8, z: f64) -> f64 {
        match code {
            0 => z,
            1 => z.max(0.0),
            6 => z.clamp(0.0, 6.0),
            _ => unreachable!(),
        }
    }

    /// Output size / pad-before for the ceil(in/stride) "same" convention,
    /// or the unpadded "valid" one.
    pub fn geometry(
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        sh: usize,
        sw: usize,
        same: bool,
    ) -> (usize, usize, usize, usize) {
        if same {
            let oh = h.div_ceil(sh);
            let ow = w.div_ceil(sw);
            let ph = ((oh - 1) * sh + kh).saturating_sub(h) / 2;
            let pw = ((ow - 1) * sw + kw).saturating_sub(w) / 2;
            (oh, ow, ph, pw)
        } else {
            ((h - kh) / sh + 1, (w - kw) / sw + 1, 0, 0)
        }
    }

    /// Direct six-loop convolution in f64. `x` is `[n,h,w,cin]`, `wgt` is
    /// `[kh,kw,cin,cout]` (or `[kh,kw,cin,mult]` when `depthwise`), output is
    /// `[n,oh,ow,cout]` after bias and activation.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        x: &[f64],
        n: usize,
        h: usize,
        w: usize,
        cin: usize,
        wgt: &[f64],
        kh: usize,
        kw: usize,
        cout: usize,
        bias: &[f64],
        sh: usize,
        sw: usize,
        same: bool,
        depthwise: bool,
        activation: u8,
    ) -> (Vec<f64>, usize, usize) {
        let (oh, ow, ph, pw) = geometry(h, w, kh, kw, sh, sw, same);
        let mult = if depthwise { cout / cin } else { 1 };
        let mut out = vec![0.0f64; n * oh * ow * cout];
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for co in 0..cout {
                        let mut acc = bias[co];
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * sh + ky) as isize - ph as isize;
                                let ix = (ox * sw + kx) as isize - pw as isize;
                                if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                    continue;
                                }
                                let (iy, ix) = (iy as usize, ix as usize);
                                if depthwise {
                                    let ci = co / mult;
                                    let m = co % mult;
                                    acc += x[((ni * h + iy) * w + ix) * cin + ci]
                                        * wgt[((ky * kw + kx) * cin + ci) * mult + m];
                                } else {
                                    for ci in 0..cin {
                                        acc += x[((ni * h + iy) * w + ix) * cin + ci]
                                            * wgt[((ky * kw + kx) * cin + ci) * cout + co];
                                    }
                                }
                            }
                        }
                        out[((ni * oh + oy) * ow + ox) * cout + co] = act(activation, acc);
                    }
                }
            }
        }
        (out, oh, ow)
    }

    /// Train-mode batch normalization in f64: per-channel batch mean and
    /// biased variance over everything but the last axis.
    pub fn batchnorm_train(
        x: &[f64],
        c: usize,
        gamma: &[f64],
        beta: &[f64],
        epsilon: f64,
    ) -> Vec<f64> {
        let rows = x.len() / c;
        let mut mean = vec![0.0; c];
        for r in 0..rows {
            for ch in 0..c {
                mean[ch] += x[r * c + ch];
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        let mut var = vec![0.0; c];
        for r in 0..rows {
            for ch in 0..c {
                var[ch] += (x[r * c + ch] - mean[ch]).powi(2);
            }
        }
        for v in &mut var {
            *v /= rows as f64;
        }
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            for ch in 0..c {
                let i = r * c + ch;
                out[i] = gamma[ch] * (x[i] - mean[ch]) / (var[ch] + epsilon).sqrt() + beta[ch];
            }
        }
        out
    }

    /// `[n,d] x [d,k] + [k]` in f64.
    pub fn dense(x: &[f64], n: usize, d: usize, w: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            for j in 0..k {
                let mut acc = b[j];
                for dd in 0..d {
                    acc += x[i * d + dd] * w[dd * k + j];
                }
                out[i * k + j] = acc;
            }
        }
        out
    }

    /// Mean cross-entropy of softmax(logits) against one-hot labels, with the
    /// same 1e-12 probability floor the implementation documents.
    pub fn softmax_ce_mean(logits: &[f64], n: usize, k: usize, onehot: &[f64]) -> f64 {
        let mut loss = 0.0;
        for i in 0..n {
            let row = &logits[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
            let mut p_true = 0.0;
            for j in 0..k {
                p_true += onehot[i * k + j] * ((row[j] - max).exp() / sum);
            }
            loss -= p_true.max(1e-12).ln();
        }
        loss / n as f64
    }

    /// Naive triple-loop matrix product in f64.
    pub fn matmul(a: &[f64], m: usize, kdim: usize, b: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..kdim {
                    acc += a[i * kdim + kk] * b[kk * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central finite-difference gradient of `f` with respect to `theta`,
/// step `h` (the spec'd 1e-3 unless a caller overrides).
pub fn fd_gradient(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for i in 0..theta.len() {
        work[i] = theta[i] + h;
        let plus = f(&work);
        work[i] = theta[i] - h;
        let minus = f(&work);
        work[i] = theta[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Largest relative error between an implementation gradient and a
/// finite-difference one. Near-zero pairs compare against a 0.01 floor.
pub fn max_rel_err(imp: &[f32], fd: &[f64]) -> f64 {
    assert_eq!(imp.len(), fd.len());
    imp.iter()
        .zip(fd)
        .map(|(&a, &b)| {
            let a = a as f64;
            (a - b).abs() / a.abs().max(b.abs()).max(0.01)
        })
        .fold(0.0, f64::max)
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

// ---------------------------------------------------------------------------
// Student-t quadrature oracle
// ---------------------------------------------------------------------------

pub mod quad {
    /// Lanczos ln-gamma (g = 5, n = 6), accurate to ~1e-10 for x > 0.
    pub fn ln_gamma(x: f64) -> f64 {
        const C: [f64; 6] = [
            76.18009172947146,
            -86.50532032941677,
            24.01409824083091,
            -1.231739572450155,
            0.1208650973866179e-2,
            -0.5395239384953e-5,
        ];
        let mut ser = 1.000000000190015;
        for (i, &c) in C.iter().enumerate() {
            ser += c / (x + i as f64 + 1.0);
        }
        let tmp = x + 5.5;
        (x + 0.5) * tmp.ln() - tmp + (2.5066282746310005 * ser / x).ln()
    }

    /// Density of Student's t with `df` degrees of freedom.
    pub fn t_pdf(t: f64, df: f64) -> f64 {
        let ln_norm = ln_gamma((df + 1.0) / 2.0)
            - ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        (ln_norm - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp()
    }

    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn adaptive(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
                + adaptive(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
        }
    }

    /// Adaptive-Simpson integral of `f` over `[a, b]`.
    pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = simpson(a, b, fa, fm, fb);
        adaptive(&f, a, b, fa, fm, fb, whole, eps, 60)
    }

    /// CDF of Student's t by integrating the density from 0.
    pub fn t_cdf(t: f64, df: f64) -> f64 {
        let half = integrate(|u| t_pdf(u, df), 0.0, t.abs(), 1e-13);
        if t >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    /// Two-tailed p-value for an observed statistic.
    pub fn two_tailed_p(t: f64, df: f64) -> f64 {
        1.0 - 2.0 * integrate(|u| t_pdf(u, df), 0.0, t.abs(), 1e-13)
    }

    /// Pooled two-sample t statistic computed the long way: explicit two-pass
    /// means and variances.
    pub fn pooled_t(a: &[f64], b: &[f64]) -> f64 {
        let (n1, n2) = (a.len() as f64, b.len() as f64);
        let m1 = a.iter().sum::<f64>() / n1;
        let m2 = b.iter().sum::<f64>() / n2;
        let s1 = a.iter().map(|v| (v - m1).powi(2)).sum::<f64>() / (n1 - 1.0);
        let s2 = b.iter().map(|v| (v - m2).powi(2)).sum::<f64>() / (n2 - 1.0);
        let sp = (((n1 - 1.0) * s1 + (n2 - 1.0) * s2) / (n1 + n2 - 2.0)).sqrt();
        (m1 - m2) / (sp * (1.0 / n1 + 1.0 / n2).sqrt())
    }
}

// ---------------------------------------------------------------------------
// Dataset fixtures
// ---------------------------------------------------------------------------

pub mod fixtures {
    use super::*;
    use std::fs;
    use std::io::Write;
    use std::path::Path;

    pub const CLASS_DIRS: [&str; 3] = ["admin", "intruder", "no_human"];

    /// Binary P6 PPM with maxval 255.
    pub fn write_ppm(path: &Path, w: usize, h: usize, rgb: &[u8]) {
        assert_eq!(rgb.len(), w * h * 3);
        let mut f = fs::File::create(path).unwrap();
        write!(f, "P6\n{w} {h}\n255\n").unwrap();
        f.write_all(rgb).unwrap();
    }

    /// Class-separable synthetic image: a class-specific dominant color plus
    /// seeded noise. Learnable by a small net in a handful of epochs.
    pub fn class_image(class: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let base: [[i32; 3]; 3] = [[200, 60, 60], [60, 200, 60], [60, 60, 200]];
        let mut rgb = Vec::with_capacity(size * size * 3);
        for _ in 0..size * size {
            for ch in 0..3 {
                let v = base[class][ch] + rng.random_range(-50..=50);
                rgb.push(v.clamp(0, 255) as u8);
            }
        }
        rgb
    }

    /// Writes `per_class` images per class under `root/{admin,intruder,no_human}`.
    pub fn make_synthetic_dataset(root: &Path, per_class: usize, size: usize, seed: u64) {
        let mut r = rng(seed);
        for (c, dir) in CLASS_DIRS.iter().enumerate() {
            let d = root.join(dir);
            fs::create_dir_all(&d).unwrap();
            for i in 0..per_class {
                let rgb = class_image(c, size, &mut r);
                write_ppm(&d.join(format!("img_{i:03}.ppm")), size, size, &rgb);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Brute-force metrics recount
// ---------------------------------------------------------------------------

pub mod recount {
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Counts {
        pub tp: u64,
        pub tn: u64,
        pub fp: u64,
        pub fne: u64,
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct ClassValues {
        pub accuracy: f64,
        pub precision: f64,
        pub recall: f64,
        pub f1: f64,
        pub support: u64,
    }

    /// One-vs-rest counts for `class` by scanning the raw label lists.
    pub fn counts(actual: &[usize], predicted: &[usize], class: usize) -> Counts {
        let mut c = Counts {
            tp: 0,
            tn: 0,
            fp: 0,
            fne: 0,
        };
        for (&a, &p) in actual.iter().zip(predicted) {
            match (a == class, p == class) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fne += 1,
            }
        }
        c
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn class_values(actual: &[usize], predicted: &[usize], class: usize) -> ClassValues {
        let c = counts(actual, predicted, class);
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fne);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassValues {
            accuracy: ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fne),
            precision,
            recall,
            f1,
            support: actual.iter().filter(|&&a| a == class).count() as u64,
        }
    }

    pub fn micro_accuracy(actual: &[usize], predicted: &[usize]) -> f64 {
        if actual.is_empty() {
            return 0.0;
        }
        let hits = actual
            .iter()
            .zip(predicted)
            .filter(|(a, p)| a == p)
            .count();
        hits as f64 / actual.len() as f64
    }
}
