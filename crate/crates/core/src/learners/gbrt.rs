//! Gradient-boosted regression trees on log-loss with second-order leaf
//! weights and an exact greedy split search.

use serde::{Deserialize, Serialize};

use super::{check_inputs, sigmoid, single_class, LearnerError, LearnerParams};
use crate::matrix::{canonical_order, DenseMatrix};

const PROB_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { weight: f64 },
}

impl TreeNode {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

/// Leaf weights are stored unscaled; the learning rate is applied at
/// prediction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub dims: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeNode>,
}

impl BoostedEnsemble {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.evaluate(x)).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

#[derive(Clone, Debug)]
pub struct GbrtFit {
    pub ensemble: BoostedEnsemble,
    /// Mean training log-loss before the first tree and after each tree.
    pub loss_trace: Vec<f64>,
}

pub fn train_gbrt(x: &DenseMatrix, y: &[bool], params: &LearnerParams) -> Result<BoostedEnsemble, LearnerError> {
    train_gbrt_traced(x, y, params).map(|f| f.ensemble)
}

fn log_loss(margins: &[f64], y: &[f64]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            // log(1 + e^m) − t·m, evaluated stably.
            let softplus = m.max(0.0) + (-m.abs()).exp().ln_1p();
            softplus - t * m
        })
        .sum();
    total / margins.len() as f64
}

pub fn train_gbrt_traced(x: &DenseMatrix, y: &[bool], params: &LearnerParams) -> Result<GbrtFit, LearnerError> {
    check_inputs(x, y, params)?;
    let order = canonical_order(x, y);
    let xs = x.select_rows(&order);
    let ys: Vec<f64> = order.iter().map(|&i| if y[i] { 1.0 } else { 0.0 }).collect();
    let n = ys.len();

    let mean = ys.iter().sum::<f64>() / n as f64;
    let p = mean.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let base_score = (p / (1.0 - p)).ln();
    let mut ensemble = BoostedEnsemble {
        dims: x.cols(),
        base_score,
        learning_rate: params.gbrt_learning_rate,
        trees: Vec::new(),
    };
    let mut margins = vec![base_score; n];
    let mut loss_trace = vec![log_loss(&margins, &ys)];
    if single_class(y).is_some() {
        return Ok(GbrtFit { ensemble, loss_trace });
    }

    let sorted: Vec<Column> = (0..xs.cols())
        .map(|j| {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.sort_by(|&a, &b| xs.get(a, j).total_cmp(&xs.get(b, j)));
            let values = rows.iter().map(|&i| xs.get(i, j)).collect();
            Column { feature: j, rows, values }
        })
        .filter(|c: &Column| c.values.first() != c.values.last())
        .collect();
    let builder = TreeBuilder {
        x: &xs,
        sorted: &sorted,
        lambda: params.gbrt_lambda,
        min_child_weight: params.gbrt_min_child_weight,
        max_depth: params.gbrt_max_depth,
    };

    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..params.gbrt_n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - ys[i];
            hess[i] = p * (1.0 - p);
        }
        let tree = builder.build(&grad, &hess);
        for (i, m) in margins.iter_mut().enumerate() {
            *m += params.gbrt_learning_rate * tree.evaluate(xs.row(i));
        }
        ensemble.trees.push(tree);
        loss_trace.push(log_loss(&margins, &ys));
    }
    Ok(GbrtFit { ensemble, loss_trace })
}

/// One non-constant feature's rows in ascending value order, with the
/// values alongside.
struct Column {
    feature: usize,
    rows: Vec<usize>,
    values: Vec<f64>,
}

struct TreeBuilder<'a> {
    x: &'a DenseMatrix,
    sorted: &'a [Column],
    lambda: f64,
    min_child_weight: f64,
    max_depth: usize,
}

#[derive(Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

enum Slot {
    Pending,
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A node awaiting expansion: its arena slot and ascending rows.
struct Open {
    slot: usize,
    rows: Vec<usize>,
    g: f64,
    h: f64,
}

/// Running left-side sums of one node during a feature scan.
#[derive(Clone, Copy)]
struct Scan {
    gl: f64,
    hl: f64,
    prev: Option<f64>,
}

const NO_NODE: usize = usize::MAX;

impl TreeBuilder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.lambda;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.lambda;
        if denom > 0.0 {
            -g / denom
        } else {
            0.0
        }
    }

    fn open(&self, slot: usize, rows: Vec<usize>, grad: &[f64], hess: &[f64]) -> Open {
        let g = rows.iter().map(|&i| grad[i]).sum();
        let h = rows.iter().map(|&i| hess[i]).sum();
        Open { slot, rows, g, h }
    }

    /// Grows one tree level by level; every level costs one pass over each
    /// presorted feature column.
    fn build(&self, grad: &[f64], hess: &[f64]) -> TreeNode {
        let n = grad.len();
        let mut arena = vec![Slot::Pending];
        let mut level = vec![self.open(0, (0..n).collect(), grad, hess)];
        let mut node_of = vec![NO_NODE; n];
        for depth in 0.. {
            if level.is_empty() {
                break;
            }
            let mut candidates = Vec::new();
            for node in level {
                if depth >= self.max_depth || node.rows.len() < 2 {
                    arena[node.slot] = Slot::Leaf(self.leaf_weight(node.g, node.h));
                } else {
                    candidates.push(node);
                }
            }
            for (k, node) in candidates.iter().enumerate() {
                for &i in &node.rows {
                    node_of[i] = k;
                }
            }
            let best = self.best_splits(&candidates, &node_of, grad, hess);
            let mut next = Vec::new();
            for (node, split) in candidates.into_iter().zip(best) {
                for &i in &node.rows {
                    node_of[i] = NO_NODE;
                }
                let Some(split) = split else {
                    arena[node.slot] = Slot::Leaf(self.leaf_weight(node.g, node.h));
                    continue;
                };
                let (left, right): (Vec<usize>, Vec<usize>) =
                    node.rows.iter().partition(|&&i| self.x.get(i, split.feature) < split.threshold);
                let (l, r) = (arena.len(), arena.len() + 1);
                arena.push(Slot::Pending);
                arena.push(Slot::Pending);
                arena[node.slot] = Slot::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: l,
                    right: r,
                };
                next.push(self.open(l, left, grad, hess));
                next.push(self.open(r, right, grad, hess));
            }
            level = next;
        }
        assemble(&arena, 0)
    }

    /// Best positive-gain split of every candidate node. Features are
    /// scanned in index order and thresholds ascending, and only a strictly
    /// larger gain replaces the incumbent.
    fn best_splits(&self, nodes: &[Open], node_of: &[usize], grad: &[f64], hess: &[f64]) -> Vec<Option<Split>> {
        let parents: Vec<f64> = nodes.iter().map(|nd| self.score(nd.g, nd.h)).collect();
        let mut best: Vec<Option<Split>> = vec![None; nodes.len()];
        let fresh = Scan {
            gl: 0.0,
            hl: 0.0,
            prev: None,
        };
        let mut scans = vec![fresh; nodes.len()];
        for column in self.sorted {
            let feature = column.feature;
            scans.iter_mut().for_each(|s| *s = fresh);
            for (&i, &v) in column.rows.iter().zip(&column.values) {
                let k = node_of[i];
                if k == NO_NODE {
                    continue;
                }
                let (g, h) = (nodes[k].g, nodes[k].h);
                let scan = &mut scans[k];
                if let Some(pv) = scan.prev {
                    if v > pv {
                        let (gl, hl) = (scan.gl, scan.hl);
                        let hr = h - hl;
                        if hl >= self.min_child_weight && hr >= self.min_child_weight {
                            let gain = 0.5 * (self.score(gl, hl) + self.score(g - gl, hr) - parents[k]);
                            if gain > 0.0 && best[k].is_none_or(|b| gain > b.gain) {
                                let mid = pv + (v - pv) / 2.0;
                                let threshold = if mid > pv { mid } else { v };
                                best[k] = Some(Split {
                                    feature,
                                    threshold,
                                    gain,
                                });
                            }
                        }
                    }
                }
                scan.gl += grad[i];
                scan.hl += hess[i];
                scan.prev = Some(v);
            }
        }
        best
    }
}

fn assemble(arena: &[Slot], at: usize) -> TreeNode {
    match arena[at] {
        Slot::Leaf(weight) => TreeNode::Leaf { weight },
        Slot::Split {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(assemble(arena, left)),
            right: Box::new(assemble(arena, right)),
        },
        Slot::Pending => unreachable!("every arena slot is resolved before assembly"),
    }
}
