//! The three classifier families, trained from scratch.
//!
//! All trainers are deterministic functions of (X, y, params): rows are put
//! into a canonical order before fitting and every tie is broken by index.
//! A training set containing a single class yields a constant predictor
//! for that class.

mod gbrt;
mod interior;
mod logistic;
mod svm;
mod text;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{dot, DenseMatrix};

pub use gbrt::{train_gbrt, train_gbrt_traced, BoostedEnsemble, GbrtFit, TreeNode};
pub use logistic::{logistic_gradient, logistic_objective, train_logreg, train_logreg_traced, LogregFit};
pub use svm::{svm_primal_objective, train_svm, train_svm_traced, SvmFit};
pub use text::{parse_model, ModelTextError};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("training set is empty")]
    Empty,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("model expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("label {value} at row {row} is not 0 or 1")]
    NonBinaryLabel { row: usize, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearnerKind {
    Svm,
    Gbrt,
    Logistic,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Svm, LearnerKind::Gbrt, LearnerKind::Logistic];

    pub fn code(self) -> &'static str {
        match self {
            LearnerKind::Svm => "svm",
            LearnerKind::Gbrt => "gbrt",
            LearnerKind::Logistic => "logistic",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LearnerKind::Svm => "SVM",
            LearnerKind::Gbrt => "Gradient Boosted Trees",
            LearnerKind::Logistic => "Logistic Regression",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for LearnerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "svm" => Ok(LearnerKind::Svm),
            "gbrt" | "xgboost" => Ok(LearnerKind::Gbrt),
            "logistic" | "logreg" => Ok(LearnerKind::Logistic),
            _ => Err(format!("unknown model kind `{s}`")),
        }
    }
}

/// Hyperparameters for all three learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerParams {
    pub svm_c: f64,
    /// Stop when the maximal KKT violation drops below this.
    pub svm_tol: f64,
    /// One epoch is `rows` pair updates.
    pub svm_max_epochs: usize,
    pub gbrt_learning_rate: f64,
    pub gbrt_max_depth: usize,
    pub gbrt_n_estimators: usize,
    pub gbrt_lambda: f64,
    pub gbrt_min_child_weight: f64,
    pub logreg_l2: f64,
    pub logreg_tol: f64,
    pub logreg_max_iter: usize,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            svm_c: 1.0,
            svm_tol: 1e-3,
            svm_max_epochs: 1000,
            gbrt_learning_rate: 0.1,
            gbrt_max_depth: 3,
            gbrt_n_estimators: 100,
            gbrt_lambda: 1.0,
            gbrt_min_child_weight: 1.0,
            logreg_l2: 1.0,
            logreg_tol: 1e-8,
            logreg_max_iter: 100,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let positive = [
            ("svm_c", self.svm_c),
            ("svm_tol", self.svm_tol),
            ("gbrt_learning_rate", self.gbrt_learning_rate),
            ("logreg_tol", self.logreg_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LearnerError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("gbrt_lambda", self.gbrt_lambda),
            ("gbrt_min_child_weight", self.gbrt_min_child_weight),
            ("logreg_l2", self.logreg_l2),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LearnerError::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.svm_max_epochs == 0 || self.logreg_max_iter == 0 {
            return Err(LearnerError::InvalidParams("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearKind {
    Svm,
    Logistic,
}

/// `w·x + b`, read as a sign (SVM) or through the logistic link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: LinearKind,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// SVM: `w·x + b >= 0` is positive. Logistic: probability `>= 0.5` is positive.
    pub fn predict_row(&self, x: &[f64]) -> bool {
        match self.kind {
            LinearKind::Svm => self.decision(x) >= 0.0,
            LinearKind::Logistic => sigmoid(self.decision(x)) >= 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    Linear(LinearModel),
    Boosted(BoostedEnsemble),
}

impl TrainedModel {
    pub fn dims(&self) -> usize {
        match self {
            TrainedModel::Linear(m) => m.weights.len(),
            TrainedModel::Boosted(m) => m.dims,
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> bool {
        match self {
            TrainedModel::Linear(m) => m.predict_row(x),
            TrainedModel::Boosted(m) => m.probability(x) >= 0.5,
        }
    }

    pub fn to_text(&self) -> String {
        text::model_to_text(self)
    }
}

pub fn predict(model: &TrainedModel, x: &DenseMatrix) -> Result<Vec<bool>, LearnerError> {
    if x.cols() != model.dims() {
        return Err(LearnerError::DimensionMismatch {
            expected: model.dims(),
            found: x.cols(),
        });
    }
    Ok((0..x.rows()).map(|i| model.predict_row(x.row(i))).collect())
}

pub fn train(kind: LearnerKind, x: &DenseMatrix, y: &[bool], params: &LearnerParams) -> Result<TrainedModel, LearnerError> {
    Ok(match kind {
        LearnerKind::Svm => TrainedModel::Linear(train_svm(x, y, params)?),
        LearnerKind::Gbrt => TrainedModel::Boosted(train_gbrt(x, y, params)?),
        LearnerKind::Logistic => TrainedModel::Linear(train_logreg(x, y, params)?),
    })
}

/// Converts numeric 0/1 labels, rejecting anything else.
pub fn binary_labels(values: &[f64]) -> Result<Vec<bool>, LearnerError> {
    values
        .iter()
        .enumerate()
        .map(|(row, &value)| match value {
            v if v == 0.0 => Ok(false),
            v if v == 1.0 => Ok(true),
            _ => Err(LearnerError::NonBinaryLabel { row, value }),
        })
        .collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_inputs(x: &DenseMatrix, y: &[bool], params: &LearnerParams) -> Result<(), LearnerError> {
    params.validate()?;
    if x.rows() == 0 {
        return Err(LearnerError::Empty);
    }
    if x.rows() != y.len() {
        return Err(LearnerError::LengthMismatch {
            rows: x.rows(),
            labels: y.len(),
        });
    }
    Ok(())
}

/// `Some(class)` when every label is the same.
fn single_class(y: &[bool]) -> Option<bool> {
    let first = *y.first()?;
    y.iter().all(|v| *v == first).then_some(first)
}
