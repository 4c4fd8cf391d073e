//! K-fold cross validation with precision, recall and F1 on the positive class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Standardizer;
use crate::learners::{predict, train, LearnerError, LearnerKind, LearnerParams};
use crate::matrix::DenseMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("k-fold needs k >= 2, got {0}")]
    TooFewFolds(usize),
    #[error("{rows} rows cannot be split into {k} folds")]
    TooFewRows { rows: usize, k: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Panics if the slices differ in length.
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        assert_eq!(predicted.len(), actual.len(), "prediction/label length mismatch");
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&self, other: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1, each taken as 0 when its denominator is 0.
pub fn metrics(c: &Confusion) -> Metrics {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics { precision, recall, f1 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl FoldResult {
    pub fn new(fold_index: usize, confusion: Confusion) -> Self {
        let m = metrics(&confusion);
        Self {
            fold_index,
            confusion,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
}

impl CvResult {
    pub fn from_folds(folds: Vec<FoldResult>) -> Self {
        let k = folds.len().max(1) as f64;
        let mean = |f: fn(&FoldResult) -> f64| folds.iter().map(f).sum::<f64>() / k;
        Self {
            mean_precision: mean(|r| r.precision),
            mean_recall: mean(|r| r.recall),
            mean_f1: mean(|r| r.f1),
            folds,
        }
    }

    /// Metrics of the summed confusion over all folds.
    pub fn pooled(&self) -> Metrics {
        let total = self.folds.iter().fold(Confusion::default(), |acc, f| acc.add(&f.confusion));
        metrics(&total)
    }
}

/// Shuffles `0..n_rows` with a seeded generator and cuts it into `k` folds;
/// the first `n_rows % k` folds get one extra row. Each fold is sorted.
pub fn kfold_split(n_rows: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    if n_rows < k {
        return Err(EvalError::TooFewRows { rows: n_rows, k });
    }
    let mut idx: Vec<usize> = (0..n_rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n_rows / k, n_rows % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = idx[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CvOptions {
    /// Standardize features using statistics of each training fold.
    pub standardize: bool,
}

pub fn cross_validate(
    x: &DenseMatrix,
    y: &[bool],
    kind: LearnerKind,
    params: &LearnerParams,
    k: usize,
    seed: u64,
) -> Result<CvResult, EvalError> {
    cross_validate_with(x, y, kind, params, k, seed, CvOptions::default())
}

pub fn cross_validate_with(
    x: &DenseMatrix,
    y: &[bool],
    kind: LearnerKind,
    params: &LearnerParams,
    k: usize,
    seed: u64,
    options: CvOptions,
) -> Result<CvResult, EvalError> {
    if x.rows() != y.len() {
        return Err(LearnerError::LengthMismatch {
            rows: x.rows(),
            labels: y.len(),
        }
        .into());
    }
    let folds = kfold_split(x.rows(), k, seed)?;
    let results: Vec<Result<FoldResult, EvalError>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let test = &folds[f];
            let mut in_test = vec![false; x.rows()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train_idx: Vec<usize> = (0..x.rows()).filter(|&i| !in_test[i]).collect();
            let mut x_train = x.select_rows(&train_idx);
            let mut x_test = x.select_rows(test);
            if options.standardize {
                let s = Standardizer::fit(&x_train);
                x_train = s.transform(&x_train);
                x_test = s.transform(&x_test);
            }
            let y_train: Vec<bool> = train_idx.iter().map(|&i| y[i]).collect();
            let y_test: Vec<bool> = test.iter().map(|&i| y[i]).collect();
            let model = train(kind, &x_train, &y_train, params)?;
            let predicted = predict(&model, &x_test)?;
            Ok(FoldResult::new(f, Confusion::from_predictions(&predicted, &y_test)))
        })
        .collect();
    let folds = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(CvResult::from_folds(folds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let m = metrics(&Confusion::new(1, 1, 0, 1));
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        let m = metrics(&Confusion::new(0, 0, 0, 5));
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn fold_sizes() {
        let folds = kfold_split(10, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut sizes: Vec<usize> = kfold_split(11, 5, 1).unwrap().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [2, 2, 2, 2, 3]);
        assert_eq!(kfold_split(10, 5, 7).unwrap(), kfold_split(10, 5, 7).unwrap());
    }

    #[test]
    fn split_errors() {
        assert_eq!(kfold_split(3, 5, 0), Err(EvalError::TooFewRows { rows: 3, k: 5 }));
        assert_eq!(kfold_split(3, 1, 0), Err(EvalError::TooFewFolds(1)));
    }

    #[test]
    fn pooled_differs_from_mean() {
        let cv = CvResult::from_folds(vec![
            FoldResult::new(0, Confusion::new(1, 0, 1, 0)),
            FoldResult::new(1, Confusion::new(0, 0, 2, 0)),
        ]);
        assert_eq!(cv.mean_f1, 0.5);
        assert_eq!(cv.pooled().f1, 1.0);
    }
}
