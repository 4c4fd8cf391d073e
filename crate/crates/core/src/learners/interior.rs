//! Mehrotra predictor-corrector for the box- and equality-constrained SVM
//! dual with a low-rank Hessian `Q = Z Zᵀ`.
//!
//! Each Newton system `(D + Z Zᵀ) u = r` is solved through the Woodbury
//! identity when `Z` has fewer columns than rows, otherwise by a dense
//! Cholesky factorization of the `n × n` matrix.

use crate::matrix::{cholesky, cholesky_solve, dot};

const MAX_ITER: usize = 100;
const STEP_FRACTION: f64 = 0.99;
/// Target for `max(μ, ‖residual‖∞)`.
const TOL: f64 = 1e-10;
/// Iterations without a better merit before giving up. Near the optimum the
/// Woodbury solves lose accuracy and the residual grows again.
const STALL_LIMIT: usize = 2;

/// Factorized `D + Z Zᵀ`.
enum Factor {
    Woodbury { d_inv: Vec<f64>, chol: Vec<f64> },
    Dense { chol: Vec<f64> },
}

struct Signed<'a> {
    /// Row-major `n × d` matrix with rows `ỹᵢ xᵢ`.
    z: &'a [f64],
    n: usize,
    d: usize,
}

impl Signed<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    /// `Zᵀ v`.
    fn t_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (o, zij) in out.iter_mut().zip(self.row(i)) {
                    *o += vi * zij;
                }
            }
        }
        out
    }

    /// `Q v = Z (Zᵀ v)`.
    fn q_mul(&self, v: &[f64]) -> Vec<f64> {
        let w = self.t_mul(v);
        (0..self.n).map(|i| dot(self.row(i), &w)).collect()
    }

    fn factor(&self, diag: &[f64]) -> Option<Factor> {
        let (n, d) = (self.n, self.d);
        if d < n {
            let d_inv: Vec<f64> = diag.iter().map(|v| 1.0 / v).collect();
            let mut s = vec![0.0; d * d];
            for i in 0..n {
                let zi = self.row(i);
                for a in 0..d {
                    let f = d_inv[i] * zi[a];
                    if f != 0.0 {
                        for b in 0..=a {
                            s[a * d + b] += f * zi[b];
                        }
                    }
                }
            }
            for a in 0..d {
                s[a * d + a] += 1.0;
                for b in 0..a {
                    s[b * d + a] = s[a * d + b];
                }
            }
            Some(Factor::Woodbury {
                chol: cholesky(s, d)?,
                d_inv,
            })
        } else {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = dot(self.row(i), self.row(j));
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
                m[i * n + i] += diag[i];
            }
            Some(Factor::Dense { chol: cholesky(m, n)? })
        }
    }

    fn solve(&self, f: &Factor, r: &[f64]) -> Vec<f64> {
        match f {
            Factor::Dense { chol } => cholesky_solve(chol, self.n, r),
            Factor::Woodbury { d_inv, chol } => {
                let scaled: Vec<f64> = r.iter().zip(d_inv).map(|(a, b)| a * b).collect();
                let t = cholesky_solve(chol, self.d, &self.t_mul(&scaled));
                (0..self.n)
                    .map(|i| scaled[i] - d_inv[i] * dot(self.row(i), &t))
                    .collect()
            }
        }
    }
}

/// Largest `t ≤ 1` keeping `x + t·dx > 0` for every pair.
fn max_step(pairs: &[(&[f64], &[f64])]) -> f64 {
    let mut t = 1.0f64;
    for (x, dx) in pairs {
        for (xi, di) in x.iter().zip(dx.iter()) {
            if *di < 0.0 {
                t = t.min(-xi / di);
            }
        }
    }
    t
}

/// Moves each variable onto the bound whose multiplier dominates its
/// distance from that bound.
fn identify_bounds(alpha: &[f64], lo: &[f64], hi: &[f64], c: f64) -> Vec<f64> {
    alpha
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&a, (&l, &h))| {
            if l > a {
                0.0
            } else if h > c - a {
                c
            } else {
                a
            }
        })
        .collect()
}

/// Approximate minimizer of `½ αᵀQα − Σα` subject to `0 ≤ α ≤ c` and
/// `yᵀα = 0`. Returns the iterate with the smallest `max(μ, residual)`,
/// with variables whose bound is active set exactly onto it, and the number
/// of iterations taken.
pub(crate) fn solve_dual(z: &[f64], n: usize, d: usize, y: &[f64], c: f64) -> (Vec<f64>, usize) {
    let zm = Signed { z, n, d };
    let mut alpha = vec![0.5 * c; n];
    let mut lo = vec![1.0; n];
    let mut hi = vec![1.0; n];
    let mut nu = 0.0;
    let mut iterations = 0;
    let mut best = (alpha.clone(), f64::INFINITY);
    let mut stalled = 0;
    while iterations < MAX_ITER {
        let slack: Vec<f64> = alpha.iter().map(|a| c - a).collect();
        let q_alpha = zm.q_mul(&alpha);
        let r_dual: Vec<f64> = (0..n).map(|i| q_alpha[i] - 1.0 + nu * y[i] - lo[i] + hi[i]).collect();
        let r_primal = dot(y, &alpha);
        let mu = (dot(&lo, &alpha) + dot(&hi, &slack)) / (2 * n) as f64;
        let r_norm = r_dual.iter().fold(r_primal.abs(), |m, v| m.max(v.abs()));
        let merit = mu.max(r_norm);
        if merit < best.1 {
            best = (identify_bounds(&alpha, &lo, &hi, c), merit);
            stalled = 0;
        } else {
            stalled += 1;
        }
        if merit < TOL || stalled >= STALL_LIMIT {
            break;
        }
        let diag: Vec<f64> = (0..n).map(|i| lo[i] / alpha[i] + hi[i] / slack[i]).collect();
        let Some(factor) = zm.factor(&diag) else { break };
        let m_y = zm.solve(&factor, y);
        let y_m_y = dot(y, &m_y);

        // Direction for complementarity targets `r_lo`, `r_hi`.
        let direction = |r_lo: &[f64], r_hi: &[f64]| {
            let rhs: Vec<f64> = (0..n).map(|i| -r_dual[i] + r_lo[i] / alpha[i] - r_hi[i] / slack[i]).collect();
            let m_r = zm.solve(&factor, &rhs);
            let d_nu = (dot(y, &m_r) + r_primal) / y_m_y;
            let d_alpha: Vec<f64> = (0..n).map(|i| m_r[i] - m_y[i] * d_nu).collect();
            let d_lo: Vec<f64> = (0..n).map(|i| (r_lo[i] - lo[i] * d_alpha[i]) / alpha[i]).collect();
            let d_hi: Vec<f64> = (0..n).map(|i| (r_hi[i] + hi[i] * d_alpha[i]) / slack[i]).collect();
            (d_alpha, d_nu, d_lo, d_hi)
        };

        let r_lo: Vec<f64> = (0..n).map(|i| -alpha[i] * lo[i]).collect();
        let r_hi: Vec<f64> = (0..n).map(|i| -slack[i] * hi[i]).collect();
        let (da, _, dl, dh) = direction(&r_lo, &r_hi);
        let ds: Vec<f64> = da.iter().map(|v| -v).collect();
        let t = max_step(&[(&alpha, &da), (&slack, &ds), (&lo, &dl), (&hi, &dh)]);
        let mu_aff = (0..n)
            .map(|i| (alpha[i] + t * da[i]) * (lo[i] + t * dl[i]) + (slack[i] + t * ds[i]) * (hi[i] + t * dh[i]))
            .sum::<f64>()
            / (2 * n) as f64;
        let sigma = (mu_aff / mu).powi(3).min(1.0);

        let r_lo: Vec<f64> = (0..n).map(|i| sigma * mu - alpha[i] * lo[i] - da[i] * dl[i]).collect();
        let r_hi: Vec<f64> = (0..n).map(|i| sigma * mu - slack[i] * hi[i] - ds[i] * dh[i]).collect();
        let (da, dnu, dl, dh) = direction(&r_lo, &r_hi);
        let ds: Vec<f64> = da.iter().map(|v| -v).collect();
        let t = (STEP_FRACTION * max_step(&[(&alpha, &da), (&slack, &ds), (&lo, &dl), (&hi, &dh)])).min(1.0);
        if !(t > 0.0) || da.iter().any(|v| !v.is_finite()) {
            break;
        }
        for i in 0..n {
            alpha[i] = (alpha[i] + t * da[i]).clamp(0.0, c);
            lo[i] += t * dl[i];
            hi[i] += t * dh[i];
        }
        nu += t * dnu;
        iterations += 1;
    }
    (best.0, iterations)
}
