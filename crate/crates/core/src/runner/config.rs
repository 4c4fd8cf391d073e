use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::features::InputVariant;
use crate::learners::{LearnerKind, LearnerParams};
use crate::targets::{Behavior, CATEGORIES};

/// How the PI-feature toggle is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// Every semantically distinct experiment once: the PI feature is only
    /// added to demographic variants, and only for Actual Purchase targets.
    #[default]
    Canonical,
    /// Every variant is enumerated with the toggle both off and on, giving
    /// ten inputs per base. Where the feature does not apply the "on" copy
    /// trains without it.
    Toggled,
}

/// `"all"`, `"none"`, or an explicit id list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Selection {
    #[default]
    All,
    None,
    Ids(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SelectionRepr {
    Keyword(String),
    Ids(Vec<String>),
}

impl Serialize for Selection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Selection::All => SelectionRepr::Keyword("all".into()),
            Selection::None => SelectionRepr::Keyword("none".into()),
            Selection::Ids(ids) => SelectionRepr::Ids(ids.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Selection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match SelectionRepr::deserialize(d)? {
            SelectionRepr::Keyword(k) if k == "all" => Ok(Selection::All),
            SelectionRepr::Keyword(k) if k == "none" => Ok(Selection::None),
            SelectionRepr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "expected \"all\", \"none\" or a list of ids, got \"{k}\""
            ))),
            SelectionRepr::Ids(ids) => Ok(Selection::Ids(ids)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSelection {
    /// Product bases; `all` means every advert-matched product.
    pub product: Selection,
    pub user: Selection,
}

mod codes {
    use super::*;

    pub fn serialize<S: Serializer, T: Display>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
    where
        D: Deserializer<'de>,
        T: FromStr<Err = String>,
    {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Selects which experiments make up a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    #[serde(with = "codes")]
    pub models: Vec<LearnerKind>,
    pub bases: BaseSelection,
    #[serde(with = "codes")]
    pub variants: Vec<InputVariant>,
    /// Enumerate configurations with the January purchase-intention feature.
    pub pi_feature: bool,
    #[serde(with = "codes")]
    pub behaviors: Vec<Behavior>,
    pub categories: Vec<u8>,
    pub k: usize,
    pub global_seed: u64,
    pub accounting: Accounting,
    /// Z-score features with training-fold statistics.
    pub standardize: bool,
    pub learner: LearnerParams,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            models: LearnerKind::ALL.to_vec(),
            bases: BaseSelection::default(),
            variants: InputVariant::ALL.to_vec(),
            pi_feature: true,
            behaviors: Behavior::ALL.to_vec(),
            categories: (0..CATEGORIES as u8).collect(),
            k: 5,
            global_seed: 0,
            accounting: Accounting::Canonical,
            standardize: false,
            learner: LearnerParams::default(),
        }
    }
}

impl MatrixConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("matrix config always serializes")
    }
}
