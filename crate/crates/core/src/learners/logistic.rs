//! L2-penalized logistic regression fitted by damped Newton iterations.
//!
//! Minimizes `Σ [log(1 + e^zᵢ) − yᵢzᵢ] + (λ/2)‖w‖²` with `zᵢ = w·xᵢ + b`;
//! the intercept is not penalized.

use super::{check_inputs, sigmoid, single_class, LearnerError, LearnerParams, LinearKind, LinearModel};
use crate::matrix::{canonical_order, cholesky, cholesky_solve, dot, DenseMatrix};

const PROB_CLAMP: f64 = 1e-6;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Clone, Debug)]
pub struct LogregFit {
    pub model: LinearModel,
    pub iterations: usize,
    /// Objective before the first step and after each accepted step.
    pub objective_trace: Vec<f64>,
    pub gradient_norm: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Penalized negative log-likelihood.
pub fn logistic_objective(weights: &[f64], bias: f64, x: &DenseMatrix, y: &[bool], l2: f64) -> f64 {
    let data: f64 = (0..x.rows())
        .map(|i| {
            let z = dot(weights, x.row(i)) + bias;
            softplus(z) - if y[i] { z } else { 0.0 }
        })
        .sum();
    data + 0.5 * l2 * dot(weights, weights)
}

/// Gradient of [`logistic_objective`]: weights first, intercept last.
pub fn logistic_gradient(weights: &[f64], bias: f64, x: &DenseMatrix, y: &[bool], l2: f64) -> Vec<f64> {
    let d = weights.len();
    let mut g = vec![0.0; d + 1];
    for i in 0..x.rows() {
        let r = sigmoid(dot(weights, x.row(i)) + bias) - if y[i] { 1.0 } else { 0.0 };
        for (gj, xj) in g.iter_mut().zip(x.row(i)) {
            *gj += r * xj;
        }
        g[d] += r;
    }
    for j in 0..d {
        g[j] += l2 * weights[j];
    }
    g
}

pub fn train_logreg(x: &DenseMatrix, y: &[bool], params: &LearnerParams) -> Result<LinearModel, LearnerError> {
    train_logreg_traced(x, y, params).map(|f| f.model)
}

pub fn train_logreg_traced(x: &DenseMatrix, y: &[bool], params: &LearnerParams) -> Result<LogregFit, LearnerError> {
    check_inputs(x, y, params)?;
    let d = x.cols();
    let l2 = params.logreg_l2;
    if let Some(class) = single_class(y) {
        let p = if class { 1.0 - PROB_CLAMP } else { PROB_CLAMP };
        let bias = (p / (1.0 - p)).ln();
        let weights = vec![0.0; d];
        let obj = logistic_objective(&weights, bias, x, y, l2);
        return Ok(LogregFit {
            model: LinearModel {
                weights,
                bias,
                kind: LinearKind::Logistic,
            },
            iterations: 0,
            objective_trace: vec![obj],
            gradient_norm: 0.0,
        });
    }

    let order = canonical_order(x, y);
    let xs = x.select_rows(&order);
    let ys: Vec<bool> = order.iter().map(|&i| y[i]).collect();
    let n = ys.len();

    // θ = (w, b)
    let mut theta = vec![0.0; d + 1];
    let mean = ys.iter().filter(|v| **v).count() as f64 / n as f64;
    theta[d] = (mean / (1.0 - mean)).ln();
    let objective = |t: &[f64]| logistic_objective(&t[..d], t[d], &xs, &ys, l2);
    let mut f = objective(&theta);
    let mut trace = vec![f];
    let mut grad = logistic_gradient(&theta[..d], theta[d], &xs, &ys, l2);
    let mut iterations = 0;

    while iterations < params.logreg_max_iter && norm(&grad) >= params.logreg_tol {
        let hess = hessian(&theta, &xs, l2);
        let Some(step) = newton_step(hess, &grad, d + 1) else {
            break;
        };
        let slope = dot(&grad, &step);
        if slope >= 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let fc = objective(&cand);
            if fc <= f + ARMIJO * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            break;
        };
        iterations += 1;
        let improved = fc < f;
        theta = cand;
        f = fc;
        trace.push(f);
        grad = logistic_gradient(&theta[..d], theta[d], &xs, &ys, l2);
        if !improved {
            break;
        }
    }

    Ok(LogregFit {
        gradient_norm: norm(&grad),
        model: LinearModel {
            bias: theta[d],
            weights: theta[..d].to_vec(),
            kind: LinearKind::Logistic,
        },
        iterations,
        objective_trace: trace,
    })
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Row-major (d+1)×(d+1) Hessian.
fn hessian(theta: &[f64], x: &DenseMatrix, l2: f64) -> Vec<f64> {
    let d = x.cols();
    let m = d + 1;
    let mut h = vec![0.0; m * m];
    let mut ext = vec![1.0; m];
    for i in 0..x.rows() {
        ext[..d].copy_from_slice(x.row(i));
        let p = sigmoid(dot(&theta[..d], x.row(i)) + theta[d]);
        let s = p * (1.0 - p);
        if s == 0.0 {
            continue;
        }
        for a in 0..m {
            let sa = s * ext[a];
            if sa == 0.0 {
                continue;
            }
            for b in a..m {
                h[a * m + b] += sa * ext[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            h[a * m + b] = h[b * m + a];
        }
    }
    for j in 0..d {
        h[j * m + j] += l2;
    }
    h
}

/// Solves `H s = −g` by Cholesky, adding a growing ridge if `H` is not
/// numerically positive definite.
fn newton_step(h: Vec<f64>, g: &[f64], m: usize) -> Option<Vec<f64>> {
    let scale = (0..m).map(|i| h[i * m + i].abs()).fold(0.0, f64::max).max(1.0);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut a = h.clone();
        for i in 0..m {
            a[i * m + i] += ridge;
        }
        if let Some(l) = cholesky(a, m) {
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            return Some(cholesky_solve(&l, m, &neg_g));
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    None
}
