use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{Confusion, CvResult, FoldResult};
use crate::features::{BaseKind, InputConfig, InputVariant, ModelBase};
use crate::learners::LearnerKind;
use crate::targets::Behavior;

/// One cell of the experiment matrix.
///
/// `input` is the configuration actually trained on. `pi_requested` records
/// the PI toggle as enumerated; in toggled accounting it can be set while
/// `input.include_pi_feature` is not, when the feature is invalid for the
/// target or variant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: LearnerKind,
    pub base: ModelBase,
    pub input: InputConfig,
    pub pi_requested: bool,
    pub behavior: Behavior,
    pub category: u8,
    pub k: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Stable identity, independent of `k` and `seed`.
    pub fn id(&self) -> String {
        spec_id(self.model, &self.base, self.input.variant, self.pi_requested, self.behavior, self.category)
    }
}

impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

pub(crate) fn spec_id(
    model: LearnerKind,
    base: &ModelBase,
    variant: InputVariant,
    pi_requested: bool,
    behavior: Behavior,
    category: u8,
) -> String {
    format!(
        "{model}|{base}|{variant}|pi={}|{behavior}|c{category}",
        u8::from(pi_requested)
    )
}

/// First eight bytes (little endian) of SHA-256 over the global seed and the spec id.
pub fn derive_seed(global_seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub spec: ExperimentSpec,
    pub cv: CvResult,
}

pub const RESULT_HEADER: [&str; 15] = [
    "spec_id",
    "model",
    "base_kind",
    "base_id",
    "variant",
    "pi_requested",
    "pi_feature",
    "behavior",
    "category",
    "k",
    "seed",
    "mean_precision",
    "mean_recall",
    "mean_f1",
    "folds",
];

fn yes_no(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

impl ScoreRecord {
    /// Tab-separated row matching [`RESULT_HEADER`]. Means are written in
    /// round-trip precision; folds as `tp/fp/tn/fn` joined by `;`.
    pub fn to_row(&self) -> String {
        let s = &self.spec;
        let folds: Vec<String> = self
            .cv
            .folds
            .iter()
            .map(|f| {
                let c = &f.confusion;
                format!("{}/{}/{}/{}", c.tp, c.fp, c.tn, c.fn_)
            })
            .collect();
        [
            s.id(),
            s.model.to_string(),
            s.base.kind().to_string(),
            s.base.id().to_string(),
            s.input.variant.to_string(),
            yes_no(s.pi_requested).to_string(),
            yes_no(s.input.include_pi_feature).to_string(),
            s.behavior.to_string(),
            s.category.to_string(),
            s.k.to_string(),
            s.seed.to_string(),
            format!("{:?}", self.cv.mean_precision),
            format!("{:?}", self.cv.mean_recall),
            format!("{:?}", self.cv.mean_f1),
            folds.join(";"),
        ]
        .join("\t")
    }

    pub fn from_row(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != RESULT_HEADER.len() {
            return Err(format!("expected {} fields, found {}", RESULT_HEADER.len(), f.len()));
        }
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(format!("bad flag `{s}`")),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number `{s}`"));
        let model: LearnerKind = f[1].parse()?;
        let base = ModelBase::from_parts(f[2].parse::<BaseKind>()?, f[3]);
        let variant: InputVariant = f[4].parse()?;
        let pi_requested = flag(f[5])?;
        let input = InputConfig::new(variant, flag(f[6])?).map_err(|e| e.to_string())?;
        let behavior: Behavior = f[7].parse()?;
        let category: u8 = f[8].parse().map_err(|_| format!("bad category `{}`", f[8]))?;
        let k: usize = f[9].parse().map_err(|_| format!("bad k `{}`", f[9]))?;
        let seed: u64 = f[10].parse().map_err(|_| format!("bad seed `{}`", f[10]))?;
        let mut folds = Vec::new();
        if !f[14].is_empty() {
            for (i, part) in f[14].split(';').enumerate() {
                let c: Vec<u64> = part
                    .split('/')
                    .map(|v| v.parse::<u64>().map_err(|_| format!("bad fold `{part}`")))
                    .collect::<Result<_, _>>()?;
                if c.len() != 4 {
                    return Err(format!("bad fold `{part}`"));
                }
                folds.push(FoldResult::new(i, Confusion::new(c[0], c[1], c[2], c[3])));
            }
        }
        let spec = ExperimentSpec {
            model,
            base,
            input,
            pi_requested,
            behavior,
            category,
            k,
            seed,
        };
        if spec.id() != f[0] {
            return Err(format!("spec id `{}` does not match its fields", f[0]));
        }
        let cv = CvResult {
            folds,
            mean_precision: num(f[11])?,
            mean_recall: num(f[12])?,
            mean_f1: num(f[13])?,
        };
        Ok(ScoreRecord { spec, cv })
    }
}
