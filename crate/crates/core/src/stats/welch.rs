//! Two-sample t-tests and the special functions behind their p-values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TTestError {
    #[error("t-test needs at least 2 observations per sample, got {0}")]
    TooFewSamples(usize),
    #[error("paired t-test needs samples of equal length ({0} vs {1})")]
    UnpairedLengths(usize, usize),
}

/// Outcome of one test. `t_stat`, `df` and `p_value` are NaN when both
/// samples have zero variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.iter().all(|v| *v == x[0]) {
        return (x[0], 0.0);
    }
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Two-sided Welch unequal-variance test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest, TTestError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(TTestError::TooFewSamples(s.len()));
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut out = TTest {
        n_a: a.len(),
        n_b: b.len(),
        mean_a: ma,
        mean_b: mb,
        t_stat: f64::NAN,
        df: f64::NAN,
        p_value: f64::NAN,
    };
    if va == 0.0 && vb == 0.0 {
        return Ok(out);
    }
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    out.t_stat = t;
    out.df = df;
    out.p_value = t_two_sided_p(t, df);
    Ok(out)
}

/// Paired test on element-wise differences `a[i] − b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, TTestError> {
    if a.len() != b.len() {
        return Err(TTestError::UnpairedLengths(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(TTestError::TooFewSamples(a.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (md, vd) = mean_var(&d);
    let n = d.len() as f64;
    let mut out = TTest {
        n_a: a.len(),
        n_b: b.len(),
        mean_a: a.iter().sum::<f64>() / n,
        mean_b: b.iter().sum::<f64>() / n,
        t_stat: f64::NAN,
        df: f64::NAN,
        p_value: f64::NAN,
    };
    if vd == 0.0 {
        return Ok(out);
    }
    out.t_stat = md / (vd / n).sqrt();
    out.df = n - 1.0;
    out.p_value = t_two_sided_p(out.t_stat, out.df);
    Ok(out)
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, nine coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// `I_x(a, b)` by the continued fraction, using the symmetry
/// `I_x(a, b) = 1 − I_{1−x}(b, a)` where it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Modified Lentz evaluation.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x and I_x(a, 1) = x^a.
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(0.7, 3.0, 1.0) - 0.343).abs() < 1e-14);
    }

    #[test]
    fn one_degree_of_freedom_is_cauchy() {
        // P(|T| > 1) = 0.5 for the Cauchy distribution.
        assert!((t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_samples_give_nan() {
        let r = welch_t_test(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!(r.p_value.is_nan() && r.t_stat.is_nan());
        let r = welch_t_test(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(r.p_value.is_nan());
    }

    #[test]
    fn one_constant_sample_is_computed() {
        let r = welch_t_test(&[0.0, 0.0, 0.0], &[0.1, 0.2, 0.3]).unwrap();
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
        assert!((r.df - 2.0).abs() < 1e-12);
    }

    #[test]
    fn same_sample_gives_p_one() {
        let a = [0.1, 0.5, 0.2];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!((r.t_stat, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn too_few() {
        assert_eq!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(TTestError::TooFewSamples(1)));
    }

    #[test]
    fn paired_shift() {
        let a = [1.0, 2.0, 3.5, 4.0];
        let b = [0.5, 1.0, 3.0, 3.9];
        let r = paired_t_test(&a, &b).unwrap();
        assert_eq!(r.df, 3.0);
        assert!(r.t_stat > 0.0);
        let same = paired_t_test(&a, &a.map(|v| v - 1.0)).unwrap();
        assert!(same.p_value.is_nan());
    }
}
