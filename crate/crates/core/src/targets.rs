//! Two-wave survey answers mapped onto the six behavior categories.
//!
//! | category | January | March  |
//! |----------|---------|--------|
//! | 0        | Yes     | No     |
//! | 1        | No      | No     |
//! | 2        | No      | Yes    |
//! | 3        | Yes     | Yes    |
//! | 4        | either  | Yes    |
//! | 5        | either  | No     |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SurveyResponse;

pub const CATEGORIES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Behavior {
    ActualPurchase,
    PurchaseIntention,
}

impl Behavior {
    pub const ALL: [Behavior; 2] = [Behavior::ActualPurchase, Behavior::PurchaseIntention];

    /// Short code used in file formats.
    pub fn code(self) -> &'static str {
        match self {
            Behavior::ActualPurchase => "ap",
            Behavior::PurchaseIntention => "pi",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Behavior::ActualPurchase => "Actual Purchase",
            Behavior::PurchaseIntention => "Purchase Intention",
        }
    }

    /// (January, March) answers for this behavior.
    pub fn waves(self, r: &SurveyResponse) -> (bool, bool) {
        match self {
            Behavior::ActualPurchase => (r.ap_jan, r.ap_mar),
            Behavior::PurchaseIntention => (r.pi_jan, r.pi_mar),
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ap" | "actual_purchase" => Ok(Behavior::ActualPurchase),
            "pi" | "purchase_intention" => Ok(Behavior::PurchaseIntention),
            _ => Err(format!("unknown behavior `{s}`")),
        }
    }
}

/// The categories a single (January, March) answer pair belongs to:
/// exactly one of 0–3, plus 4 or 5 depending on the March answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CategorySet {
    bits: u8,
}

impl CategorySet {
    pub fn contains(self, category: u8) -> bool {
        category < CATEGORIES as u8 && self.bits & (1 << category) != 0
    }

    pub fn members(self) -> Vec<u8> {
        (0..CATEGORIES as u8).filter(|c| self.contains(*c)).collect()
    }

    /// The member among 0–3.
    pub fn base(self) -> u8 {
        (0..4).find(|c| self.contains(*c)).expect("category set always has a base member")
    }
}

pub fn categorize(jan: bool, mar: bool) -> CategorySet {
    let (base, union) = match (jan, mar) {
        (true, false) => (0, 5),
        (false, false) => (1, 5),
        (false, true) => (2, 4),
        (true, true) => (3, 4),
    };
    CategorySet {
        bits: (1 << base) | (1 << union),
    }
}

/// One-vs-rest labels: `true` where the response falls into `category`.
pub fn label_vector<'a, I>(responses: I, behavior: Behavior, category: u8) -> Vec<bool>
where
    I: IntoIterator<Item = &'a SurveyResponse>,
{
    responses
        .into_iter()
        .map(|r| {
            let (jan, mar) = behavior.waves(r);
            categorize(jan, mar).contains(category)
        })
        .collect()
}

/// Fraction of responses whose category set contains each category.
/// Returns zeros for an empty input.
pub fn category_distribution<'a, I>(responses: I, behavior: Behavior) -> [f64; CATEGORIES]
where
    I: IntoIterator<Item = &'a SurveyResponse>,
{
    let mut counts = [0usize; CATEGORIES];
    let mut n = 0usize;
    for r in responses {
        let (jan, mar) = behavior.waves(r);
        let set = categorize(jan, mar);
        for (c, count) in counts.iter_mut().enumerate() {
            if set.contains(c as u8) {
                *count += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return [0.0; CATEGORIES];
    }
    counts.map(|c| c as f64 / n as f64)
}
