//! Line-oriented text form of trained models. Floats are written in their
//! shortest round-trip representation, so `parse_model(&m.to_text()) == m`.
//!
//! ```text
//! model linear          model gbrt
//! kind svm              dims 2
//! dims 2                base_score -0.4
//! bias 0.5              learning_rate 0.1
//! weights 1.0 -2.0      trees 1
//!                       tree
//!                       split 0 0.5
//!                       leaf -0.4
//!                       leaf 0.4
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use super::{BoostedEnsemble, LinearKind, LinearModel, TrainedModel, TreeNode};

#[derive(Debug, Error, PartialEq)]
#[error("model text line {line}: {message}")]
pub struct ModelTextError {
    pub line: usize,
    pub message: String,
}

pub(super) fn model_to_text(model: &TrainedModel) -> String {
    let mut out = String::new();
    match model {
        TrainedModel::Linear(m) => {
            let kind = match m.kind {
                LinearKind::Svm => "svm",
                LinearKind::Logistic => "logistic",
            };
            let _ = writeln!(out, "model linear\nkind {kind}\ndims {}\nbias {:?}", m.weights.len(), m.bias);
            out.push_str("weights");
            for w in &m.weights {
                let _ = write!(out, " {w:?}");
            }
            out.push('\n');
        }
        TrainedModel::Boosted(m) => {
            let _ = writeln!(
                out,
                "model gbrt\ndims {}\nbase_score {:?}\nlearning_rate {:?}\ntrees {}",
                m.dims,
                m.base_score,
                m.learning_rate,
                m.trees.len()
            );
            for t in &m.trees {
                out.push_str("tree\n");
                write_tree(t, &mut out);
            }
        }
    }
    out
}

fn write_tree(node: &TreeNode, out: &mut String) {
    match node {
        TreeNode::Leaf { weight } => {
            let _ = writeln!(out, "leaf {weight:?}");
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let _ = writeln!(out, "split {feature} {threshold:?}");
            write_tree(left, out);
            write_tree(right, out);
        }
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> ModelTextError {
        ModelTextError {
            line: self.line,
            message: message.into(),
        }
    }

    fn next_tokens(&mut self) -> Result<Vec<&'a str>, ModelTextError> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.split_whitespace().collect());
            }
        }
        Err(self.err("unexpected end of input"))
    }

    fn field(&mut self, key: &str) -> Result<Vec<&'a str>, ModelTextError> {
        let toks = self.next_tokens()?;
        if toks.first() != Some(&key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(toks[1..].to_vec())
    }

    fn single<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ModelTextError> {
        let vals = self.field(key)?;
        match vals.as_slice() {
            [v] => v.parse().map_err(|_| self.err(format!("bad value for `{key}`"))),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T, ModelTextError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }
}

pub fn parse_model(text: &str) -> Result<TrainedModel, ModelTextError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let model = match lines.single::<String>("model")?.as_str() {
        "linear" => {
            let kind = match lines.single::<String>("kind")?.as_str() {
                "svm" => LinearKind::Svm,
                "logistic" => LinearKind::Logistic,
                other => return Err(lines.err(format!("unknown linear kind `{other}`"))),
            };
            let dims: usize = lines.single("dims")?;
            let bias: f64 = lines.single("bias")?;
            let weights = lines
                .field("weights")?
                .iter()
                .map(|s| lines.parse::<f64>(s))
                .collect::<Result<Vec<_>, _>>()?;
            if weights.len() != dims {
                return Err(lines.err(format!("expected {dims} weights, found {}", weights.len())));
            }
            TrainedModel::Linear(LinearModel { weights, bias, kind })
        }
        "gbrt" => {
            let dims: usize = lines.single("dims")?;
            let base_score: f64 = lines.single("base_score")?;
            let learning_rate: f64 = lines.single("learning_rate")?;
            let count: usize = lines.single("trees")?;
            let mut trees = Vec::with_capacity(count);
            for _ in 0..count {
                lines.field("tree")?;
                trees.push(parse_tree(&mut lines, dims)?);
            }
            TrainedModel::Boosted(BoostedEnsemble {
                dims,
                base_score,
                learning_rate,
                trees,
            })
        }
        other => return Err(lines.err(format!("unknown model type `{other}`"))),
    };
    if let Ok(extra) = lines.next_tokens() {
        return Err(lines.err(format!("trailing content `{}`", extra.join(" "))));
    }
    Ok(model)
}

fn parse_tree(lines: &mut Lines, dims: usize) -> Result<TreeNode, ModelTextError> {
    let toks = lines.next_tokens()?;
    match toks.as_slice() {
        ["leaf", w] => Ok(TreeNode::Leaf { weight: lines.parse(w)? }),
        ["split", f, t] => {
            let feature: usize = lines.parse(f)?;
            if feature >= dims {
                return Err(lines.err(format!("feature {feature} out of range")));
            }
            let threshold = lines.parse(t)?;
            let left = parse_tree(lines, dims)?;
            let right = parse_tree(lines, dims)?;
            Ok(TreeNode::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        _ => Err(lines.err("expected `leaf` or `split`")),
    }
}
