//! Linear soft-margin SVM trained on the dual. An interior-point phase
//! brings the multipliers close to the optimum, and sequential minimal
//! optimization (maximal-violating pair, second-order working-set choice,
//! shrinking) finishes to the KKT tolerance.
//!
//! Primal: `min ½‖w‖² + C Σ max(0, 1 − ỹᵢ(w·xᵢ + b))`, bias unpenalized.
//! Dual:   `min ½ αᵀQα − Σα  s.t. 0 ≤ α ≤ C, ỹᵀα = 0`, `Q_ij = ỹᵢỹⱼ xᵢ·xⱼ`.

use super::interior;
use super::{check_inputs, single_class, LearnerError, LearnerParams, LinearKind, LinearModel};
use crate::matrix::{canonical_order, dot, DenseMatrix};

const TAU: f64 = 1e-12;
/// Above this many rows the Gram matrix is not materialized.
const GRAM_LIMIT: usize = 2000;
/// Interior-point values within this fraction of `C` of a bound are snapped to it.
const SNAP: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SvmFit {
    pub model: LinearModel,
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective at the end of every epoch, and once more at exit.
    pub dual_objective: Vec<f64>,
}

pub fn train_svm(x: &DenseMatrix, y: &[bool], params: &LearnerParams) -> Result<LinearModel, LearnerError> {
    solve(x, y, params, false).map(|f| f.model)
}

/// `½‖w‖² + C Σ hinge`.
pub fn svm_primal_objective(model: &LinearModel, x: &DenseMatrix, y: &[bool], c: f64) -> f64 {
    let hinge: f64 = (0..x.rows())
        .map(|i| {
            let s = if y[i] { 1.0 } else { -1.0 };
            (1.0 - s * model.decision(x.row(i))).max(0.0)
        })
        .sum();
    0.5 * dot(&model.weights, &model.weights) + c * hinge
}

/// Signed kernel rows `Q_ij = ỹᵢỹⱼ xᵢ·xⱼ`, materialized when small enough.
enum Kernel {
    Dense(Vec<f64>),
    Rows,
}

struct Problem<'a> {
    x: &'a DenseMatrix,
    order: Vec<usize>,
    y: Vec<f64>,
    diag: Vec<f64>,
    kernel: Kernel,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.order.len()
    }

    /// Row `i` of Q, borrowed when dense, otherwise computed into `buf`.
    fn q_row<'b>(&'b self, i: usize, buf: &'b mut Vec<f64>) -> &'b [f64] {
        let n = self.n();
        match &self.kernel {
            Kernel::Dense(q) => &q[i * n..(i + 1) * n],
            Kernel::Rows => {
                let xi = self.x.row(self.order[i]);
                buf.clear();
                buf.extend((0..n).map(|t| self.y[i] * self.y[t] * dot(xi, self.x.row(self.order[t]))));
                buf
            }
        }
    }

    fn dual_objective(&self, alpha: &[f64]) -> f64 {
        let mut buf = Vec::new();
        let mut total = 0.0;
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let q = self.q_row(i, &mut buf);
                total += a * (0.5 * dot(q, alpha) - 1.0);
            }
        }
        total
    }
}

pub fn train_svm_traced(x: &DenseMatrix, y: &[bool], params: &LearnerParams) -> Result<SvmFit, LearnerError> {
    solve(x, y, params, true)
}

fn solve(x: &DenseMatrix, y: &[bool], params: &LearnerParams, traced: bool) -> Result<SvmFit, LearnerError> {
    check_inputs(x, y, params)?;
    let d = x.cols();
    if let Some(class) = single_class(y) {
        return Ok(SvmFit {
            model: LinearModel {
                weights: vec![0.0; d],
                bias: if class { 1.0 } else { -1.0 },
                kind: LinearKind::Svm,
            },
            iterations: 0,
            converged: true,
            dual_objective: vec![0.0],
        });
    }

    let order = canonical_order(x, y);
    let n = order.len();
    let ys: Vec<f64> = order.iter().map(|&i| if y[i] { 1.0 } else { -1.0 }).collect();
    let kernel = if n <= GRAM_LIMIT {
        let mut q = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let v = ys[a] * ys[b] * dot(x.row(order[a]), x.row(order[b]));
                q[a * n + b] = v;
                q[b * n + a] = v;
            }
        }
        Kernel::Dense(q)
    } else {
        Kernel::Rows
    };
    let diag = order.iter().map(|&r| dot(x.row(r), x.row(r))).collect();
    let prob = Problem {
        x,
        order,
        y: ys,
        diag,
        kernel,
    };
    let c = params.svm_c;
    let mut z = Vec::with_capacity(n * d);
    for (t, &row) in prob.order.iter().enumerate() {
        z.extend(x.row(row).iter().map(|v| prob.y[t] * v));
    }
    let (start, _) = interior::solve_dual(&z, n, d, &prob.y, c);
    let mut state = Solver::warm(&prob, c, params.svm_tol, snap_to_box(start, &prob.y, c), &z);
    let max_iter = params.svm_max_epochs.saturating_mul(n);
    let mut trace = Vec::new();
    if traced {
        trace.push(prob.dual_objective(&state.alpha));
    }
    let mut converged = false;
    let mut counter = n.min(1000) + 1;
    while state.iterations < max_iter {
        counter -= 1;
        if counter == 0 {
            counter = n.min(1000);
            state.shrink();
        }
        let pair = match state.select() {
            Some(p) => Some(p),
            None => {
                state.unshrink();
                state.select()
            }
        };
        let Some((i, j)) = pair else {
            converged = true;
            break;
        };
        state.step(i, j);
        if traced && state.iterations % n == 0 {
            trace.push(prob.dual_objective(&state.alpha));
        }
    }
    state.unshrink();
    if traced {
        trace.push(prob.dual_objective(&state.alpha));
    }

    let rho = compute_rho(&prob.y, &state.alpha, &state.grad, c);
    let mut weights = vec![0.0; d];
    for (t, &row) in prob.order.iter().enumerate() {
        let coef = state.alpha[t] * prob.y[t];
        if coef != 0.0 {
            for (w, v) in weights.iter_mut().zip(x.row(row)) {
                *w += coef * v;
            }
        }
    }
    Ok(SvmFit {
        model: LinearModel {
            weights,
            bias: -rho,
            kind: LinearKind::Svm,
        },
        iterations: state.iterations,
        converged,
        dual_objective: trace,
    })
}

/// SMO state with shrinking: variables outside `active[..active_size]`
/// are frozen and their gradients go stale until `unshrink`.
struct Solver<'p, 'a> {
    prob: &'p Problem<'a>,
    c: f64,
    eps: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    /// `Σ_{j at upper bound} C·Q_ij`, kept for gradient reconstruction.
    grad_bar: Vec<f64>,
    active: Vec<usize>,
    active_size: usize,
    unshrunk: bool,
    iterations: usize,
    buf_i: Vec<f64>,
    buf_j: Vec<f64>,
}

impl<'p, 'a> Solver<'p, 'a> {
    fn new(prob: &'p Problem<'a>, c: f64, eps: f64) -> Self {
        let n = prob.n();
        Self {
            prob,
            c,
            eps,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
            grad_bar: vec![0.0; n],
            active: (0..n).collect(),
            active_size: n,
            unshrunk: false,
            iterations: 0,
            buf_i: Vec::new(),
            buf_j: Vec::new(),
        }
    }

    /// Starts from a feasible `alpha`, with gradients computed through `z`,
    /// the rows `ỹᵢ xᵢ` in problem order.
    fn warm(prob: &'p Problem<'a>, c: f64, eps: f64, alpha: Vec<f64>, z: &[f64]) -> Self {
        let n = prob.n();
        let d = z.len() / n.max(1);
        let mut w = vec![0.0; d];
        let mut w_bar = vec![0.0; d];
        for (i, &a) in alpha.iter().enumerate() {
            let zi = &z[i * d..(i + 1) * d];
            for k in 0..d {
                w[k] += a * zi[k];
                if at_upper(a, c) {
                    w_bar[k] += c * zi[k];
                }
            }
        }
        let mut s = Self::new(prob, c, eps);
        for i in 0..n {
            let zi = &z[i * d..(i + 1) * d];
            s.grad[i] = dot(zi, &w) - 1.0;
            s.grad_bar[i] = dot(zi, &w_bar);
        }
        s.alpha = alpha;
        s
    }

    fn in_up(&self, t: usize) -> bool {
        in_up(self.prob.y[t], self.alpha[t], self.c)
    }

    fn in_low(&self, t: usize) -> bool {
        in_low(self.prob.y[t], self.alpha[t], self.c)
    }

    /// Maximal violating pair with second-order choice of `j` among the
    /// active variables; `None` once the violation is below `eps`.
    fn select(&mut self) -> Option<(usize, usize)> {
        let prob = self.prob;
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for &t in &self.active[..self.active_size] {
            if self.in_up(t) {
                let v = -prob.y[t] * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let i = i_sel?;
        let q_i = prob.q_row(i, &mut self.buf_i);

        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        for &t in &self.active[..self.active_size] {
            if !in_low(prob.y[t], self.alpha[t], self.c) {
                continue;
            }
            let violation = prob.y[t] * self.grad[t];
            let grad_diff = gmax + violation;
            let quad = prob.diag[i] + prob.diag[t] - 2.0 * prob.y[i] * prob.y[t] * q_i[t];
            gmax2 = gmax2.max(violation);
            if grad_diff > 0.0 {
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(grad_diff * grad_diff) / quad;
                if obj < best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < self.eps {
            return None;
        }
        j_sel.map(|j| (i, j))
    }

    fn step(&mut self, i: usize, j: usize) {
        let prob = self.prob;
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (upper_i, upper_j) = (at_upper(old_i, c), at_upper(old_j, c));
        let q_i = prob.q_row(i, &mut self.buf_i);
        let q_j = prob.q_row(j, &mut self.buf_j);
        update_pair(prob, &mut self.alpha, &self.grad, i, j, q_i[j], c);
        let (di, dj) = (self.alpha[i] - old_i, self.alpha[j] - old_j);
        for &k in &self.active[..self.active_size] {
            self.grad[k] += q_i[k] * di + q_j[k] * dj;
        }
        for (t, q, upper_before) in [(i, q_i, upper_i), (j, q_j, upper_j)] {
            let upper_now = at_upper(self.alpha[t], c);
            if upper_before != upper_now {
                let sign = if upper_now { c } else { -c };
                for (g, v) in self.grad_bar.iter_mut().zip(q) {
                    *g += sign * v;
                }
            }
        }
        self.iterations += 1;
    }

    fn reconstruct_gradient(&mut self) {
        let n = self.prob.n();
        if self.active_size == n {
            return;
        }
        let inactive: Vec<usize> = self.active[self.active_size..].to_vec();
        for &t in &inactive {
            self.grad[t] = self.grad_bar[t] - 1.0;
        }
        let prob = self.prob;
        for i in 0..n {
            let a = self.alpha[i];
            if a > 0.0 && a < self.c {
                let q = prob.q_row(i, &mut self.buf_i);
                for &t in &inactive {
                    self.grad[t] += a * q[t];
                }
            }
        }
    }

    fn unshrink(&mut self) {
        self.reconstruct_gradient();
        self.active_size = self.prob.n();
    }

    fn shrinkable(&self, t: usize, gmax1: f64, gmax2: f64) -> bool {
        let yg = self.prob.y[t] * self.grad[t];
        if at_upper(self.alpha[t], self.c) {
            if self.prob.y[t] > 0.0 {
                -yg > gmax1
            } else {
                -yg > gmax2
            }
        } else if at_lower(self.alpha[t]) {
            if self.prob.y[t] > 0.0 {
                yg > gmax2
            } else {
                yg > gmax1
            }
        } else {
            false
        }
    }

    fn shrink(&mut self) {
        let (mut gmax1, mut gmax2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &t in &self.active[..self.active_size] {
            let yg = self.prob.y[t] * self.grad[t];
            if self.in_up(t) {
                gmax1 = gmax1.max(-yg);
            }
            if self.in_low(t) {
                gmax2 = gmax2.max(yg);
            }
        }
        if !self.unshrunk && gmax1 + gmax2 <= self.eps * 10.0 {
            self.unshrunk = true;
            self.unshrink();
        }
        let mut k = 0;
        while k < self.active_size {
            let t = self.active[k];
            if self.shrinkable(t, gmax1, gmax2) {
                self.active_size -= 1;
                self.active.swap(k, self.active_size);
            } else {
                k += 1;
            }
        }
    }
}

/// Moves near-bound values onto the bounds and restores `ỹᵀα = 0` by
/// spreading the residual over the remaining free variables.
fn snap_to_box(mut alpha: Vec<f64>, y: &[f64], c: f64) -> Vec<f64> {
    let margin = SNAP * c;
    for a in alpha.iter_mut() {
        if *a < margin {
            *a = 0.0;
        } else if *a > c - margin {
            *a = c;
        }
    }
    let free: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > 0.0 && alpha[i] < c).collect();
    if !free.is_empty() {
        let shift = dot(y, &alpha) / free.len() as f64;
        for &i in &free {
            alpha[i] = (alpha[i] - y[i] * shift).clamp(0.0, c);
        }
    }
    alpha
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 {
        !at_upper(a, c)
    } else {
        !at_lower(a)
    }
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 {
        !at_lower(a)
    } else {
        !at_upper(a, c)
    }
}

fn at_upper(a: f64, c: f64) -> bool {
    a >= c
}

fn at_lower(a: f64) -> bool {
    a <= 0.0
}

/// Analytic two-variable step with clipping to the box.
fn update_pair(prob: &Problem, alpha: &mut [f64], grad: &[f64], i: usize, j: usize, q_ij: f64, c: f64) {
    let (qd_i, qd_j) = (prob.diag[i], prob.diag[j]);
    if prob.y[i] != prob.y[j] {
        let quad = (qd_i + qd_j + 2.0 * q_ij).max(0.0);
        let quad = if quad > 0.0 { quad } else { TAU };
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > 0.0 {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            }
        } else if alpha[j] > c {
            alpha[j] = c;
            alpha[i] = c + diff;
        }
    } else {
        let quad = (qd_i + qd_j - 2.0 * q_ij).max(0.0);
        let quad = if quad > 0.0 { quad } else { TAU };
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }
}

/// Offset from free support vectors, or the midpoint of the feasible range.
fn compute_rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if at_upper(alpha[t], c) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
