//! Pooled-variance two-sample t-test.
//!
//! The statistic is Student's pooled form,
//! `t = (m1 - m2) / (sp * sqrt(1/n1 + 1/n2))` with
//! `sp^2 = ((n1-1)s1^2 + (n2-1)s2^2) / (n1 + n2 - 2)` and
//! `df = n1 + n2 - 2`. Tail probabilities come from the regularized
//! incomplete beta function `I_x(df/2, 1/2)` at `x = df / (df + t^2)`,
//! evaluated by a Lentz continued fraction with 1e-12 convergence tolerance.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tails {
    One,
    Two,
}

impl Tails {
    pub fn parse(s: &str) -> Result<Tails> {
        match s {
            "one" => Ok(Tails::One),
            "two" => Ok(Tails::Two),
            other => Err(Error::Config(format!("tails must be one|two, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub df: u64,
    pub p_value: f64,
    pub tails: Tails,
}

/// Lanczos approximation (g = 5, 6 coefficients), valid for x > 0.
fn ln_gamma(x: f64) -> f64 {
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

/// Continued-fraction factor of the regularized incomplete beta (modified
/// Lentz method).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TOL: f64 = 1e-12;
    const TINY: f64 = 1e-30;
    const MAX_ITER: usize = 500;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // Even step.
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < TOL {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom. Exactly 0.5 at t = 0,
/// symmetric, monotone.
pub fn t_cdf(t: f64, df: u64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let v = df as f64;
    let x = v / (v + t * t);
    let half_tail = 0.5 * inc_beta(x, v / 2.0, 0.5);
    if t > 0.0 {
        1.0 - half_tail
    } else {
        half_tail
    }
}

fn mean_and_var(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Student's pooled-variance two-sample t-test.
pub fn two_sample_t_test(a: &[f64], b: &[f64], tails: Tails) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::SampleSize(format!(
            "need at least 2 observations per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("samples contain non-finite values".into()));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (m1, s1) = mean_and_var(a);
    let (m2, s2) = mean_and_var(b);
    let df = a.len() as u64 + b.len() as u64 - 2;
    let pooled = ((n1 - 1.0) * s1 + (n2 - 1.0) * s2) / df as f64;
    if pooled <= 0.0 {
        return Err(Error::Degenerate(
            "pooled variance is zero: both samples are constant".into(),
        ));
    }
    let t = (m1 - m2) / (pooled.sqrt() * (1.0 / n1 + 1.0 / n2).sqrt());
    let p_value = match tails {
        // Two-tailed P(|T| > t) is I_x(df/2, 1/2) directly.
        Tails::Two => {
            let v = df as f64;
            inc_beta(v / (v + t * t), v / 2.0, 0.5)
        }
        Tails::One => 1.0 - t_cdf(t, df),
    };
    Ok(TTestResult {
        t_statistic: t,
        df,
        p_value: p_value.clamp(f64::MIN_POSITIVE, 1.0),
        tails,
    })
}

impl TTestResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Parses one float per non-empty line.
pub fn parse_numeric_lines(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        out.push(trimmed.parse::<f64>().map_err(|_| {
            Error::Format(format!("line {}: {trimmed:?} is not a number", i + 1))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_t_zero_p_one() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = two_sample_t_test(&a, &a, Tails::Two).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, 6);
    }

    #[test]
    fn df_matches_pooled_formula_for_25_25() {
        let a: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..25).map(|i| i as f64 + 0.5).collect();
        let r = two_sample_t_test(&a, &b, Tails::Two).unwrap();
        assert_eq!(r.df, 48);
    }

    #[test]
    fn hand_computed_shifted_sequence() {
        // means 3 and 4, both variances 2.5, pooled sp^2 = 2.5,
        // t = -1 / (sqrt(2.5) * sqrt(2/5)) = -1 exactly.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = two_sample_t_test(&a, &b, Tails::Two).unwrap();
        assert!((r.t_statistic + 1.0).abs() < 1e-12, "{}", r.t_statistic);
        assert_eq!(r.df, 8);
        // 2 * (1 - cdf(1, 8)) evaluated by an independent implementation.
        assert!((r.p_value - 0.3465935070873342).abs() < 1e-9, "{}", r.p_value);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let a = [2.0, 2.0, 2.0];
        let b = [2.0, 2.0, 2.0];
        assert!(matches!(
            two_sample_t_test(&a, &b, Tails::Two),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn tiny_samples_are_rejected() {
        assert!(matches!(
            two_sample_t_test(&[1.0], &[1.0, 2.0], Tails::Two),
            Err(Error::SampleSize(_))
        ));
    }

    #[test]
    fn t_cdf_fixed_points() {
        assert_eq!(t_cdf(0.0, 5), 0.5);
        // df = 1 is Cauchy: CDF(1) = 0.5 + atan(1)/pi = 0.75.
        assert!((t_cdf(1.0, 1) - 0.75).abs() < 1e-12);
        assert!((t_cdf(1e6, 3) - 1.0).abs() < 1e-9);
        // Symmetry.
        for &t in &[0.3, 1.7, 4.2] {
            assert!((t_cdf(-t, 7) - (1.0 - t_cdf(t, 7))).abs() < 1e-12);
        }
        // Monotonicity.
        let mut prev = 0.0;
        for i in -40..=40 {
            let c = t_cdf(i as f64 / 4.0, 11);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn scale_and_shift_invariance_and_antisymmetry() {
        let a = [1.2, 3.4, 2.2, 5.0, 4.1];
        let b = [2.0, 2.5, 3.9, 1.1, 6.0];
        let r = two_sample_t_test(&a, &b, Tails::Two).unwrap();

        let scale = |s: &[f64], k: f64| -> Vec<f64> { s.iter().map(|v| v * k).collect() };
        let shift = |s: &[f64], k: f64| -> Vec<f64> { s.iter().map(|v| v + k).collect() };

        let rs = two_sample_t_test(&scale(&a, 3.5), &scale(&b, 3.5), Tails::Two).unwrap();
        assert!((rs.t_statistic - r.t_statistic).abs() <= 1e-12 * r.t_statistic.abs());

        let rh = two_sample_t_test(&shift(&a, 100.0), &shift(&b, 100.0), Tails::Two).unwrap();
        assert!((rh.t_statistic - r.t_statistic).abs() < 1e-9);

        let rr = two_sample_t_test(&b, &a, Tails::Two).unwrap();
        assert!((rr.t_statistic + r.t_statistic).abs() < 1e-12);
        assert!((rr.p_value - r.p_value).abs() < 1e-12);
    }

    #[test]
    fn one_tailed_is_half_of_two_tailed_for_positive_t() {
        let a = [5.0, 6.0, 7.0, 8.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let one = two_sample_t_test(&a, &b, Tails::One).unwrap();
        let two = two_sample_t_test(&a, &b, Tails::Two).unwrap();
        assert!((two.p_value - 2.0 * one.p_value).abs() < 1e-12);
    }

    #[test]
    fn numeric_file_parsing() {
        let v = parse_numeric_lines("1.5\n\n  2.5 \n-3\n").unwrap();
        assert_eq!(v, vec![1.5, 2.5, -3.0]);
        assert!(parse_numeric_lines("1.5\nabc\n").is_err());
    }
}
