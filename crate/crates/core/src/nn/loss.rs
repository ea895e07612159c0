//! Softmax and categorical cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to the true-class probability before taking the log, so a
/// confidently wrong prediction yields a large but finite loss.
pub const LOG_PROB_FLOOR: f64 = 1e-12;

/// How per-sample losses combine into the scalar loss.
///
/// `Mean` is the default: it keeps the learning rate meaningful across batch
/// sizes. `Sum` is the dataset-sum form for exactness checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Row-wise softmax over `[N, K]` logits.
///
/// Computed with max-subtraction and 64-bit intermediates: rows sum to 1
/// within 1e-6, outputs are strictly positive, and adding a constant to all
/// logits of a row leaves the result unchanged.
pub fn softmax(z: &Tensor) -> Result<Tensor> {
    let dims = z.dims();
    if dims.len() != 2 || dims[1] < 2 {
        return Err(Error::Shape(format!(
            "softmax expects [N, K>=2] logits, got {}",
            z.shape()
        )));
    }
    if !z.data().iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("softmax input contains non-finite logits".into()));
    }
    let k = dims[1];
    let mut out = vec![0.0f32; z.len()];
    for (row, out_row) in z.data().chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0f64;
        let mut exps = vec![0.0f64; k];
        for (e, &v) in exps.iter_mut().zip(row) {
            *e = ((v as f64) - max).exp();
            sum += *e;
        }
        for (o, e) in out_row.iter_mut().zip(exps) {
            *o = (e / sum) as f32;
        }
    }
    Tensor::new(dims, out)
}

/// Mean (or sum) of `-log p_true` plus the fused gradient with respect to the
/// logits that produced `probs`: `(probs - onehot)` scaled by `1/N` under
/// `Reduction::Mean`.
pub fn cross_entropy(probs: &Tensor, onehot: &Tensor, reduction: Reduction) -> Result<(f32, Tensor)> {
    if probs.dims() != onehot.dims() {
        return Err(Error::Shape(format!(
            "cross_entropy shapes differ: {} vs {}",
            probs.shape(),
            onehot.shape()
        )));
    }
    let dims = probs.dims();
    if dims.len() != 2 {
        return Err(Error::Shape(format!(
            "cross_entropy expects [N, K], got {}",
            probs.shape()
        )));
    }
    let (n, k) = (dims[0], dims[1]);
    let mut loss = 0.0f64;
    for (p_row, y_row) in probs.data().chunks_exact(k).zip(onehot.data().chunks_exact(k)) {
        let mut p_true = 0.0f64;
        for (&p, &y) in p_row.iter().zip(y_row) {
            p_true += (p as f64) * (y as f64);
        }
        loss -= p_true.max(LOG_PROB_FLOOR).ln();
    }
    let scale = match reduction {
        Reduction::Mean => 1.0 / n as f32,
        Reduction::Sum => 1.0,
    };
    let loss = match reduction {
        Reduction::Mean => (loss / n as f64) as f32,
        Reduction::Sum => loss as f32,
    };
    let mut d_logits = probs.sub(onehot)?;
    for g in d_logits.data_mut() {
        *g *= scale;
    }
    Ok((loss, d_logits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let z = Tensor::zeros(&[1, 3]);
        let p = softmax(&z).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn huge_equal_logits_do_not_overflow() {
        let z = Tensor::new(&[1, 3], vec![1000.0, 1000.0, 1000.0]).unwrap();
        let p = softmax(&z).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_1_2_3_matches_direct_evaluation() {
        // exp(1..3)/sum in 64-bit: 0.09003057, 0.24472847, 0.66524096
        let z = Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let p = softmax(&z).unwrap();
        let expect = [0.09003057, 0.24472847, 0.66524096];
        for (&got, &want) in p.data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let mut z = Tensor::zeros(&[1, 2]);
        z.data_mut()[0] = 1.0;
        // Build the bad input by hand since constructors also reject NaN.
        let mut raw = z.clone();
        raw.data_mut()[1] = 0.0;
        raw.data_mut()[0] = 1.0;
        // Use a bit pattern write to smuggle in an infinity.
        raw.data_mut()[1] = f32::INFINITY;
        assert!(matches!(softmax(&raw), Err(Error::Numeric(_))));
    }

    #[test]
    fn perfect_prediction_zero_loss() {
        let probs = Tensor::new(&[2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let onehot = probs.clone();
        let (loss, _) = cross_entropy(&probs, &onehot, Reduction::Mean).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn uniform_probs_loss_is_ln3() {
        let third = 1.0 / 3.0;
        let probs = Tensor::filled(&[4, 3], third);
        let mut onehot = Tensor::zeros(&[4, 3]);
        for i in 0..4 {
            onehot.data_mut()[i * 3 + i % 3] = 1.0;
        }
        let (loss, _) = cross_entropy(&probs, &onehot, Reduction::Mean).unwrap();
        assert!((loss - 3.0f32.ln()).abs() < 1e-6, "{loss}");
        let (sum_loss, _) = cross_entropy(&probs, &onehot, Reduction::Sum).unwrap();
        assert!((sum_loss - 4.0 * 3.0f32.ln()).abs() < 1e-5);
    }

    #[test]
    fn wrong_confident_prediction_stays_finite() {
        let probs = Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap();
        let onehot = Tensor::new(&[1, 2], vec![0.0, 1.0]).unwrap();
        let (loss, _) = cross_entropy(&probs, &onehot, Reduction::Mean).unwrap();
        assert!(loss.is_finite());
        assert!(loss > 20.0); // -ln(1e-12) ~ 27.6
    }

    #[test]
    fn fused_gradient_is_probs_minus_onehot_over_n() {
        let probs = Tensor::new(&[2, 2], vec![0.75, 0.25, 0.4, 0.6]).unwrap();
        let onehot = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (_, g) = cross_entropy(&probs, &onehot, Reduction::Mean).unwrap();
        let expect = [-0.125, 0.125, 0.2, -0.2];
        for (&got, &want) in g.data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-7);
        }
    }
}
