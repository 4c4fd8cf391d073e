//! Average-F1 tables and the hypothesis t-tests over a set of score records.

mod report;
mod welch;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{BaseKind, InputConfig, InputVariant};
use crate::learners::LearnerKind;
use crate::runner::ScoreRecord;
use crate::targets::{Behavior, CATEGORIES};

pub use report::{render_average_table, render_gaps, render_pvalue_table, report_json, write_report, ReportFiles};
pub use welch::{ln_gamma, paired_t_test, regularized_incomplete_beta, t_two_sided_p, welch_t_test, TTest, TTestError};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no score records to aggregate")]
    NoRecords,
}

/// Which spec fields define a group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupBy {
    pub model: bool,
    pub base_kind: bool,
    pub behavior: bool,
    pub category: bool,
    /// Feature blocks only; both PI-feature states fall in one group.
    pub variant: bool,
    /// Full input configuration, PI feature included.
    pub input: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub model: Option<LearnerKind>,
    pub base_kind: Option<BaseKind>,
    pub behavior: Option<Behavior>,
    pub category: Option<u8>,
    pub variant: Option<InputVariant>,
    pub input: Option<InputConfig>,
}

impl GroupKey {
    fn of(record: &ScoreRecord, by: GroupBy) -> Self {
        let s = &record.spec;
        Self {
            model: by.model.then_some(s.model),
            base_kind: by.base_kind.then(|| s.base.kind()),
            behavior: by.behavior.then_some(s.behavior),
            category: by.category.then_some(s.category),
            variant: by.variant.then_some(s.input.variant),
            input: by.input.then_some(s.input),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupMean {
    pub mean: f64,
    pub count: usize,
}

/// Mean of `mean_f1` within each group. Groups without records are absent.
pub fn aggregate(records: &[ScoreRecord], by: GroupBy) -> Result<BTreeMap<GroupKey, GroupMean>, StatsError> {
    if records.is_empty() {
        return Err(StatsError::NoRecords);
    }
    let mut sums: BTreeMap<GroupKey, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(GroupKey::of(r, by)).or_insert((0.0, 0));
        e.0 += r.cv.mean_f1;
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(k, (s, n))| {
            (
                k,
                GroupMean {
                    mean: s / n as f64,
                    count: n,
                },
            )
        })
        .collect())
}

/// How the "General Average" row is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralAverageMode {
    /// Mean of the six category means.
    #[default]
    CategoryMeans,
    /// Mean over every underlying experiment.
    AllExperiments,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RowKind {
    GeneralAverage,
    Category(u8),
    /// Mean of the two behaviors' General Average rows.
    BothTargets,
}

impl fmt::Display for RowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowKind::GeneralAverage => f.write_str("General Average"),
            RowKind::Category(c) => write!(f, "{c}"),
            RowKind::BothTargets => f.write_str("Both Targets Total Average"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AverageRow {
    pub behavior: Option<Behavior>,
    pub kind: RowKind,
    /// One cell per [`InputVariant::ALL`] column.
    pub cells: [Option<f64>; 5],
    /// Mean of the present cells.
    pub total: Option<f64>,
}

/// Mean F1 by behavior × category × input variant for one model and base kind.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AverageTable {
    pub model: LearnerKind,
    pub base_kind: BaseKind,
    pub rows: Vec<AverageRow>,
}

fn mean_of(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn make_row(behavior: Option<Behavior>, kind: RowKind, cells: [Option<f64>; 5]) -> AverageRow {
    AverageRow {
        behavior,
        kind,
        cells,
        total: mean_of(cells.iter().flatten().copied()),
    }
}

/// One table per (model, base kind) present in the records, in model then
/// base-kind order. Category rows with no data are omitted.
pub fn average_tables(records: &[ScoreRecord], mode: GeneralAverageMode) -> Vec<AverageTable> {
    let by_cell = GroupBy {
        model: true,
        base_kind: true,
        behavior: true,
        category: true,
        variant: true,
        input: false,
    };
    let by_behavior = GroupBy {
        category: false,
        ..by_cell
    };
    let Ok(cells) = aggregate(records, by_cell) else {
        return Vec::new();
    };
    let experiments = aggregate(records, by_behavior).unwrap_or_default();
    let cell = |model, base_kind, behavior, category, variant| {
        cells
            .get(&GroupKey {
                model: Some(model),
                base_kind: Some(base_kind),
                behavior: Some(behavior),
                category: Some(category),
                variant: Some(variant),
                input: None,
            })
            .map(|g| g.mean)
    };

    let mut present: Vec<(LearnerKind, BaseKind)> = records.iter().map(|r| (r.spec.model, r.spec.base.kind())).collect();
    present.sort();
    present.dedup();

    let mut tables = Vec::new();
    for (model, base_kind) in present {
        let mut rows = Vec::new();
        let mut generals: Vec<[Option<f64>; 5]> = Vec::new();
        for behavior in Behavior::ALL {
            let category_rows: Vec<AverageRow> = (0..CATEGORIES as u8)
                .map(|c| {
                    let cells = InputVariant::ALL.map(|v| cell(model, base_kind, behavior, c, v));
                    make_row(Some(behavior), RowKind::Category(c), cells)
                })
                .filter(|r| r.cells.iter().any(Option::is_some))
                .collect();
            if category_rows.is_empty() {
                continue;
            }
            let general: [Option<f64>; 5] = match mode {
                GeneralAverageMode::CategoryMeans => {
                    std::array::from_fn(|j| mean_of(category_rows.iter().filter_map(|r| r.cells[j])))
                }
                GeneralAverageMode::AllExperiments => InputVariant::ALL.map(|v| {
                    experiments
                        .get(&GroupKey {
                            model: Some(model),
                            base_kind: Some(base_kind),
                            behavior: Some(behavior),
                            category: None,
                            variant: Some(v),
                            input: None,
                        })
                        .map(|g| g.mean)
                }),
            };
            generals.push(general);
            rows.push(make_row(Some(behavior), RowKind::GeneralAverage, general));
            rows.extend(category_rows);
        }
        if generals.len() == Behavior::ALL.len() {
            let both = std::array::from_fn(|j| {
                let vals: Vec<f64> = generals.iter().filter_map(|g| g[j]).collect();
                (vals.len() == generals.len()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            });
            rows.push(make_row(None, RowKind::BothTargets, both));
        }
        tables.push(AverageTable {
            model,
            base_kind,
            rows,
        });
    }
    tables
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Viewing-only against demographics-only.
    H1,
    /// Viewing plus demographics against demographics-only.
    H2,
    /// Viewing plus demographics against viewing-only.
    H3,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 3] = [Hypothesis::H1, Hypothesis::H2, Hypothesis::H3];

    pub fn code(self) -> &'static str {
        match self {
            Hypothesis::H1 => "h1",
            Hypothesis::H2 => "h2",
            Hypothesis::H3 => "h3",
        }
    }

    /// The two variants compared for a given viewing block
    /// (`ViewWeekdaySlot` or `ViewWeekday`).
    pub fn groups(self, viewing: InputVariant) -> (InputVariant, InputVariant) {
        let combined = match viewing {
            InputVariant::ViewWeekdaySlot => InputVariant::ViewWeekdaySlotPlusDemo,
            _ => InputVariant::ViewWeekdayPlusDemo,
        };
        match self {
            Hypothesis::H1 => (viewing, InputVariant::Demographics),
            Hypothesis::H2 => (combined, InputVariant::Demographics),
            Hypothesis::H3 => (combined, viewing),
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

pub const VIEWING_VARIANTS: [InputVariant; 2] = [InputVariant::ViewWeekdaySlot, InputVariant::ViewWeekday];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TTestReport {
    pub hypothesis: Hypothesis,
    pub model: LearnerKind,
    pub base_kind: BaseKind,
    pub behavior: Behavior,
    pub category: u8,
    pub viewing: InputVariant,
    pub group_a: InputVariant,
    pub group_b: InputVariant,
    pub test: TTest,
}

/// A comparison that could not be made.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Gap {
    pub hypothesis: Hypothesis,
    pub model: LearnerKind,
    pub base_kind: BaseKind,
    pub behavior: Behavior,
    pub category: u8,
    pub viewing: InputVariant,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub reports: Vec<TTestReport>,
    pub gaps: Vec<Gap>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SuiteOptions {
    /// Pair samples by base id (each base's F1 averaged first).
    pub paired: bool,
}

type SampleKey = (LearnerKind, BaseKind, Behavior, u8, InputVariant);

/// Runs every hypothesis for every (model, base kind, behavior) present in
/// the records, all six categories and both viewing variants. Comparisons
/// lacking two samples per side are reported as gaps.
pub fn hypothesis_suite(records: &[ScoreRecord], options: SuiteOptions) -> SuiteOutcome {
    let mut by_base: BTreeMap<SampleKey, BTreeMap<&str, (f64, usize)>> = BTreeMap::new();
    let mut samples: BTreeMap<SampleKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        let s = &r.spec;
        let key = (s.model, s.base.kind(), s.behavior, s.category, s.input.variant);
        samples.entry(key).or_default().push(r.cv.mean_f1);
        let e = by_base.entry(key).or_default().entry(s.base.id()).or_insert((0.0, 0));
        e.0 += r.cv.mean_f1;
        e.1 += 1;
    }
    let mut models: Vec<LearnerKind> = records.iter().map(|r| r.spec.model).collect();
    models.sort();
    models.dedup();
    let mut bases: Vec<BaseKind> = records.iter().map(|r| r.spec.base.kind()).collect();
    bases.sort();
    bases.dedup();
    let mut behaviors: Vec<Behavior> = records.iter().map(|r| r.spec.behavior).collect();
    behaviors.sort();
    behaviors.dedup();

    let mut out = SuiteOutcome::default();
    for hypothesis in Hypothesis::ALL {
        for &behavior in &behaviors {
            for &model in &models {
                for &base_kind in &bases {
                    for category in 0..CATEGORIES as u8 {
                        for viewing in VIEWING_VARIANTS {
                            let (ga, gb) = hypothesis.groups(viewing);
                            let ka = (model, base_kind, behavior, category, ga);
                            let kb = (model, base_kind, behavior, category, gb);
                            let result = if options.paired {
                                let (a, b) = paired_samples(by_base.get(&ka), by_base.get(&kb));
                                paired_t_test(&a, &b)
                            } else {
                                let empty = Vec::new();
                                welch_t_test(samples.get(&ka).unwrap_or(&empty), samples.get(&kb).unwrap_or(&empty))
                            };
                            match result {
                                Ok(test) => out.reports.push(TTestReport {
                                    hypothesis,
                                    model,
                                    base_kind,
                                    behavior,
                                    category,
                                    viewing,
                                    group_a: ga,
                                    group_b: gb,
                                    test,
                                }),
                                Err(e) => {
                                    let count = |k: &SampleKey| samples.get(k).map_or(0, Vec::len);
                                    out.gaps.push(Gap {
                                        hypothesis,
                                        model,
                                        base_kind,
                                        behavior,
                                        category,
                                        viewing,
                                        reason: format!(
                                            "{e} ({ga}: {} records, {gb}: {} records)",
                                            count(&ka),
                                            count(&kb)
                                        ),
                                    })
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn paired_samples(
    a: Option<&BTreeMap<&str, (f64, usize)>>,
    b: Option<&BTreeMap<&str, (f64, usize)>>,
) -> (Vec<f64>, Vec<f64>) {
    let (Some(a), Some(b)) = (a, b) else {
        return (Vec::new(), Vec::new());
    };
    a.iter()
        .filter_map(|(id, (sa, na))| {
            b.get(id)
                .map(|(sb, nb)| (sa / *na as f64, sb / *nb as f64))
        })
        .unzip()
}
