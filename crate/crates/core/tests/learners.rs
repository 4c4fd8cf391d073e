use adbench_core::learners::{
    logistic_gradient, logistic_objective, parse_model, predict, sigmoid, svm_primal_objective, train, train_gbrt,
    train_gbrt_traced, train_logreg, train_logreg_traced, train_svm, train_svm_traced, LearnerKind, LearnerParams,
    LinearKind, LinearModel, TrainedModel, TreeNode,
};
use adbench_core::matrix::DenseMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_instance(rows: usize, cols: usize, seed: u64, noise: f64) -> (DenseMatrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
    let mut values = Vec::with_capacity(rows * cols);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
        let score: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + noise * rng.sample::<f64, _>(StandardNormal);
        y.push(score > 0.3);
        values.extend(row);
    }
    (DenseMatrix::from_vec(rows, cols, values), y)
}

/// Exact minimizer over the bias for fixed weights: the objective is convex
/// and piecewise linear in b with kinks at `ỹᵢ − w·xᵢ`.
fn best_bias(w: &[f64], x: &DenseMatrix, y: &[bool], c: f64) -> (f64, f64) {
    let margins: Vec<f64> = (0..x.rows()).map(|i| w.iter().zip(x.row(i)).map(|(a, b)| a * b).sum()).collect();
    let mut best = (0.0, f64::INFINITY);
    for i in 0..x.rows() {
        let s = if y[i] { 1.0 } else { -1.0 };
        let b = s - margins[i];
        let model = LinearModel {
            weights: w.to_vec(),
            bias: b,
            kind: LinearKind::Svm,
        };
        let f = svm_primal_objective(&model, x, y, c);
        if f < best.1 {
            best = (b, f);
        }
    }
    best
}

/// Projected subgradient descent on the primal, keeping the best iterate.
fn svm_subgradient_oracle(x: &DenseMatrix, y: &[bool], c: f64, iters: usize) -> f64 {
    let (n, d) = (x.rows(), x.cols());
    let radius = (2.0 * c * n as f64).sqrt();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = best_bias(&w, x, y, c).1;
    let mut gw = vec![0.0; d];
    for t in 1..=iters {
        gw.copy_from_slice(&w);
        let mut gb = 0.0;
        for i in 0..n {
            let s = if y[i] { 1.0 } else { -1.0 };
            let m: f64 = w.iter().zip(x.row(i)).map(|(a, v)| a * v).sum::<f64>() + b;
            if s * m < 1.0 {
                for (g, v) in gw.iter_mut().zip(x.row(i)) {
                    *g -= c * s * v;
                }
                gb -= c * s;
            }
        }
        let step = 0.5 / (t as f64).sqrt() / (1.0 + c * n as f64);
        for (a, g) in w.iter_mut().zip(&gw) {
            *a -= step * g;
        }
        b -= step * gb;
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > radius {
            w.iter_mut().for_each(|a| *a *= radius / norm);
        }
        if t % 50 == 0 {
            let (bb, f) = best_bias(&w, x, y, c);
            if f < best {
                best = f;
                b = bb;
            }
        }
    }
    best
}

#[test]
fn svm_matches_subgradient_oracle() {
    let params = LearnerParams::default();
    for seed in 0..3 {
        let (x, y) = random_instance(30, 4, seed, 1.5);
        let model = train_svm(&x, &y, &params).unwrap();
        let ours = svm_primal_objective(&model, &x, &y, params.svm_c);
        let oracle = svm_subgradient_oracle(&x, &y, params.svm_c, 200_000);
        let rel = (ours - oracle).abs() / oracle;
        assert!(rel < 0.01, "seed {seed}: smo {ours} vs oracle {oracle}");
    }
}

#[test]
fn svm_dual_objective_monotone_per_epoch() {
    for seed in 10..14 {
        let (x, y) = random_instance(60, 5, seed, 2.0);
        let fit = train_svm_traced(&x, &y, &LearnerParams::default()).unwrap();
        assert!(fit.converged);
        for w in fit.dual_objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        }
    }
}

#[test]
fn svm_without_materialized_gram() {
    let (x, y) = random_instance(2100, 3, 99, 0.5);
    let model = train_svm(&x, &y, &LearnerParams::default()).unwrap();
    let pred = predict(&TrainedModel::Linear(model), &x).unwrap();
    let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
    assert!(acc > 0.8, "accuracy {acc}");
}

#[test]
fn gbrt_leaf_weights_recomputable() {
    let (x, y) = random_instance(100, 4, 5, 1.0);
    let params = LearnerParams::default();
    let fit = train_gbrt_traced(&x, &y, &params).unwrap();
    let ens = &fit.ensemble;
    let t: Vec<f64> = y.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    assert!((ens.base_score - (mean / (1.0 - mean)).ln()).abs() < 1e-12);

    fn leaf_path(node: &TreeNode, x: &[f64], path: &mut Vec<bool>) -> f64 {
        match node {
            TreeNode::Leaf { weight } => *weight,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let go_left = x[*feature] < *threshold;
                path.push(go_left);
                leaf_path(if go_left { left } else { right }, x, path)
            }
        }
    }

    let mut margins = vec![ens.base_score; y.len()];
    for (round, tree) in ens.trees.iter().enumerate() {
        let mut groups: std::collections::BTreeMap<Vec<bool>, (f64, f64, f64)> = Default::default();
        for i in 0..y.len() {
            let p = sigmoid(margins[i]);
            let mut path = Vec::new();
            let w = leaf_path(tree, x.row(i), &mut path);
            let e = groups.entry(path).or_insert((0.0, 0.0, w));
            e.0 += p - t[i];
            e.1 += p * (1.0 - p);
        }
        assert_eq!(groups.len(), tree.leaves(), "round {round}: every leaf has members");
        for (g, h, w) in groups.values() {
            let expect = -g / (h + params.gbrt_lambda);
            assert!((w - expect).abs() <= 1e-9 * expect.abs().max(1e-3), "round {round}: {w} vs {expect}");
        }
        for i in 0..y.len() {
            margins[i] += ens.learning_rate * tree.evaluate(x.row(i));
        }
        assert!(tree.depth() <= params.gbrt_max_depth);
    }
    assert_eq!(ens.trees.len(), params.gbrt_n_estimators);

    let losses: Vec<f64> = fit.loss_trace.clone();
    assert_eq!(losses.len(), 101);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn gbrt_single_class_predicts_base_probability() {
    let (x, _) = random_instance(20, 3, 1, 0.0);
    let m = train_gbrt(&x, &[false; 20], &LearnerParams::default()).unwrap();
    assert!(m.trees.is_empty());
    for i in 0..20 {
        assert!((m.probability(x.row(i)) - 1e-6).abs() < 1e-15);
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let (x, y) = random_instance(50, 5, 21, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let theta: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect();
        let l2 = 1.0;
        let g = logistic_gradient(&theta[..5], theta[5], &x, &y, l2);
        for j in 0..6 {
            let h = 1e-5 * theta[j].abs().max(1.0);
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (logistic_objective(&plus[..5], plus[5], &x, &y, l2)
                - logistic_objective(&minus[..5], minus[5], &x, &y, l2))
                / (2.0 * h);
            let rel = (fd - g[j]).abs() / g[j].abs().max(1.0);
            assert!(rel < 1e-5, "coord {j}: fd {fd} vs analytic {}", g[j]);
        }
    }
}

#[test]
fn logistic_constant_column_gets_no_weight() {
    let (x0, y) = random_instance(40, 2, 8, 1.0);
    let rows: Vec<[f64; 3]> = (0..40).map(|i| [x0.get(i, 0), 3.0, x0.get(i, 1)]).collect();
    let x = DenseMatrix::from_rows(3, &rows);
    let params = LearnerParams::default();
    let fit = train_logreg_traced(&x, &y, &params).unwrap();
    assert!(fit.model.weights[1].abs() < 10.0 * params.logreg_tol, "{}", fit.model.weights[1]);
}

#[test]
fn logistic_balanced_zero_features() {
    let x = DenseMatrix::zeros(10, 3);
    let y: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
    let m = train_logreg(&x, &y, &LearnerParams::default()).unwrap();
    assert!(m.bias.abs() < 1e-9);
    assert!((sigmoid(m.decision(x.row(0))) - 0.5).abs() < 1e-9);
    assert!(m.predict_row(x.row(0)));
}

#[test]
fn separable_fixture_reproduced_by_all_learners() {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        let t = i as f64 / 4.0;
        rows.push([t + 3.0, (t * 1.7).sin()]);
        y.push(true);
        rows.push([-t - 3.0, (t * 0.9).cos()]);
        y.push(false);
    }
    let x = DenseMatrix::from_rows(2, &rows);
    for kind in LearnerKind::ALL {
        let m = train(kind, &x, &y, &LearnerParams::default()).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), y, "{kind}");
    }
}

fn matrix_strategy() -> impl Strategy<Value = (DenseMatrix, Vec<bool>, Vec<usize>)> {
    (2usize..14, 1usize..4).prop_flat_map(|(n, d)| {
        (
            proptest::collection::vec(0i8..4, n * d),
            proptest::collection::vec(any::<bool>(), n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
            .prop_map(move |(v, y, perm)| {
                let m = DenseMatrix::from_vec(n, d, v.into_iter().map(|a| a as f64 * 0.5).collect());
                (m, y, perm)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn training_is_row_order_invariant((x, y, perm) in matrix_strategy()) {
        let xp = x.select_rows(&perm);
        let yp: Vec<bool> = perm.iter().map(|&i| y[i]).collect();
        let params = LearnerParams { gbrt_n_estimators: 10, ..Default::default() };
        for kind in LearnerKind::ALL {
            let a = train(kind, &x, &y, &params).unwrap();
            let b = train(kind, &xp, &yp, &params).unwrap();
            prop_assert_eq!(a.to_text(), b.to_text());
        }
    }

    #[test]
    fn model_text_round_trips((x, y, _) in matrix_strategy()) {
        let params = LearnerParams { gbrt_n_estimators: 5, ..Default::default() };
        for kind in LearnerKind::ALL {
            let m = train(kind, &x, &y, &params).unwrap();
            prop_assert_eq!(parse_model(&m.to_text()).unwrap(), m);
        }
    }

    #[test]
    fn linear_text_round_trips_arbitrary_floats(
        w in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..6),
        b in -1e300f64..1e300,
    ) {
        let m = TrainedModel::Linear(LinearModel { weights: w, bias: b, kind: LinearKind::Svm });
        prop_assert_eq!(parse_model(&m.to_text()).unwrap(), m);
    }
}
