//! Enumerates the experiment matrix, executes it on a worker pool and
//! persists the results.

mod config;
mod spec;
pub mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Catalog, ProductId, UserId};
use crate::eval::{cross_validate_with, CvOptions};
use crate::exposure::ExposureMatrix;
use crate::features::{build_labels, build_matrix, BaseKind, InputConfig, InputVariant, ModelBase};
use crate::learners::LearnerKind;
use crate::targets::{Behavior, CATEGORIES};

pub use config::{Accounting, BaseSelection, MatrixConfig, Selection};
pub use spec::{derive_seed, ExperimentSpec, ScoreRecord, RESULT_HEADER};
pub use store::{read_results, Finalized, Journal, JournalEntry, RunManifest, RunTiming};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("empty selection: {0}")]
    EmptySelection(&'static str),
    #[error("invalid matrix config: {0}")]
    InvalidConfig(String),
    #[error("unknown {kind} base `{id}`")]
    UnknownBase { kind: BaseKind, id: String },
    #[error("catalog fingerprint {found} does not match the manifest ({expected})")]
    FingerprintMismatch { expected: String, found: String },
    #[error("{0} already holds a run; resume it or choose another directory")]
    StoreExists(String),
    #[error("result store I/O: {0}")]
    Io(#[from] io::Error),
}

/// The ids bases are drawn from: panel users and advert-matched products.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BaseUniverse {
    pub users: Vec<UserId>,
    pub products: Vec<ProductId>,
}

impl BaseUniverse {
    pub fn from_catalog(catalog: &Catalog) -> Self {
        Self {
            users: catalog.users().iter().map(|u| u.user_id.clone()).collect(),
            products: catalog.advert_matched().iter().cloned().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counts {
    pub spec_count: usize,
    /// Distinct (base, enumerated input configuration) pairs.
    pub input_count: usize,
    /// Spec counts keyed by `<model>/<base kind>`.
    pub counts: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub specs: Vec<ExperimentSpec>,
    pub counts: Counts,
}

fn select<T: Clone + Ord>(
    selection: &Selection,
    universe: &[T],
    make: impl Fn(&str) -> T,
    kind: BaseKind,
) -> Result<Vec<T>, RunError> {
    match selection {
        Selection::All => Ok(universe.to_vec()),
        Selection::None => Ok(Vec::new()),
        Selection::Ids(ids) => {
            let mut out: Vec<T> = Vec::with_capacity(ids.len());
            for id in ids {
                let v = make(id);
                if universe.binary_search(&v).is_err() {
                    return Err(RunError::UnknownBase { kind, id: id.clone() });
                }
                out.push(v);
            }
            out.sort();
            out.dedup();
            Ok(out)
        }
    }
}

/// The (enumerated PI toggle, effective config) pairs for one variant and behavior.
fn input_configs(config: &MatrixConfig, variant: InputVariant, behavior: Behavior) -> Vec<(bool, InputConfig)> {
    let plain = InputConfig::plain(variant);
    let pi_valid = variant.has_demographics() && behavior == Behavior::ActualPurchase;
    let with_pi = InputConfig {
        include_pi_feature: true,
        ..plain
    };
    match (config.accounting, config.pi_feature) {
        (_, false) => vec![(false, plain)],
        (Accounting::Canonical, true) if pi_valid => vec![(false, plain), (true, with_pi)],
        (Accounting::Canonical, true) => vec![(false, plain)],
        (Accounting::Toggled, true) => vec![(false, plain), (true, if pi_valid { with_pi } else { plain })],
    }
}

fn selected_bases(universe: &BaseUniverse, config: &MatrixConfig) -> Result<Vec<ModelBase>, RunError> {
    let mut users = universe.users.clone();
    users.sort();
    let mut products = universe.products.clone();
    products.sort();
    let mut bases: Vec<ModelBase> = select(&config.bases.product, &products, |id: &str| ProductId::new(id), BaseKind::Product)?
        .into_iter()
        .map(ModelBase::ProductBased)
        .collect();
    bases.extend(
        select(&config.bases.user, &users, |id: &str| UserId::new(id), BaseKind::User)?
            .into_iter()
            .map(ModelBase::UserBased),
    );
    if bases.is_empty() {
        return Err(RunError::EmptySelection("bases"));
    }
    Ok(bases)
}

struct Cell<'a> {
    model: LearnerKind,
    base: &'a ModelBase,
    pi_requested: bool,
    input: InputConfig,
    behavior: Behavior,
    category: u8,
}

/// Visits every spec in model → base kind → base id → variant → PI toggle →
/// behavior → category order and returns (input count, counts by model/base kind).
fn walk<'a>(bases: &'a [ModelBase], config: &MatrixConfig, mut visit: impl FnMut(Cell<'a>)) -> (usize, BTreeMap<String, usize>) {
    let pi_toggles: &[bool] = if config.pi_feature { &[false, true] } else { &[false] };
    let mut per_base_inputs: HashSet<(InputVariant, bool)> = HashSet::new();
    let mut counts = BTreeMap::new();
    let mut per_base_specs = 0;
    for &variant in &config.variants {
        for &pi in pi_toggles {
            for &behavior in &config.behaviors {
                if input_configs(config, variant, behavior).iter().any(|(t, _)| *t == pi) {
                    per_base_inputs.insert((variant, pi));
                    per_base_specs += config.categories.len();
                }
            }
        }
    }
    for &model in &config.models {
        for base in bases {
            *counts.entry(format!("{model}/{}", base.kind())).or_insert(0) += per_base_specs;
            for &variant in &config.variants {
                for &pi in pi_toggles {
                    for &behavior in &config.behaviors {
                        let Some(&(_, input)) = input_configs(config, variant, behavior).iter().find(|(t, _)| *t == pi) else {
                            continue;
                        };
                        for &category in &config.categories {
                            visit(Cell {
                                model,
                                base,
                                pi_requested: pi,
                                input,
                                behavior,
                                category,
                            });
                        }
                    }
                }
            }
        }
    }
    (bases.len() * per_base_inputs.len(), counts)
}

/// Counts only: no spec ids or seeds are materialized.
pub fn count_experiments(universe: &BaseUniverse, config: &MatrixConfig) -> Result<Counts, RunError> {
    validate_config(config)?;
    let bases = selected_bases(universe, config)?;
    let mut spec_count = 0usize;
    let (input_count, counts) = walk(&bases, config, |_| spec_count += 1);
    Ok(Counts {
        spec_count,
        input_count,
        counts,
    })
}

/// Every spec of the matrix, in enumeration order.
pub fn enumerate_experiments(universe: &BaseUniverse, config: &MatrixConfig) -> Result<Enumeration, RunError> {
    validate_config(config)?;
    let bases = selected_bases(universe, config)?;
    let mut specs = Vec::new();
    let (input_count, counts) = walk(&bases, config, |c| {
        let id = spec::spec_id(c.model, c.base, c.input.variant, c.pi_requested, c.behavior, c.category);
        specs.push(ExperimentSpec {
            model: c.model,
            base: c.base.clone(),
            input: c.input,
            pi_requested: c.pi_requested,
            behavior: c.behavior,
            category: c.category,
            k: config.k,
            seed: derive_seed(config.global_seed, &id),
        });
    });
    Ok(Enumeration {
        counts: Counts {
            spec_count: specs.len(),
            input_count,
            counts,
        },
        specs,
    })
}

fn validate_config(config: &MatrixConfig) -> Result<(), RunError> {
    if config.models.is_empty() {
        return Err(RunError::EmptySelection("models"));
    }
    if config.variants.is_empty() {
        return Err(RunError::EmptySelection("variants"));
    }
    if config.behaviors.is_empty() {
        return Err(RunError::EmptySelection("behaviors"));
    }
    if config.categories.is_empty() {
        return Err(RunError::EmptySelection("categories"));
    }
    if let Some(c) = config.categories.iter().find(|c| **c as usize >= CATEGORIES) {
        return Err(RunError::InvalidConfig(format!("category {c} is out of range 0..=5")));
    }
    let distinct = |n: usize, m: usize| n == m;
    let mut cats = config.categories.clone();
    cats.sort_unstable();
    cats.dedup();
    let mut models = config.models.clone();
    models.sort();
    models.dedup();
    let mut variants = config.variants.clone();
    variants.sort();
    variants.dedup();
    let mut behaviors = config.behaviors.clone();
    behaviors.sort();
    behaviors.dedup();
    if !(distinct(cats.len(), config.categories.len())
        && distinct(models.len(), config.models.len())
        && distinct(variants.len(), config.variants.len())
        && distinct(behaviors.len(), config.behaviors.len()))
    {
        return Err(RunError::InvalidConfig("selections must not repeat entries".into()));
    }
    if config.k < 2 {
        return Err(RunError::InvalidConfig(format!("k must be at least 2, got {}", config.k)));
    }
    config
        .learner
        .validate()
        .map_err(|e| RunError::InvalidConfig(e.to_string()))
}

pub fn manifest_for(catalog: &Catalog, config: &MatrixConfig, enumeration: &Enumeration) -> RunManifest {
    RunManifest {
        format_version: 1,
        global_seed: config.global_seed,
        catalog_fingerprint: catalog.fingerprint(),
        matrix: config.clone(),
        spec_count: enumeration.counts.spec_count,
        input_count: enumeration.counts.input_count,
        counts: enumeration.counts.counts.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Progress {
    pub id: String,
    pub ok: bool,
    pub done: usize,
    pub total: usize,
}

pub type ProgressFn<'a> = &'a (dyn Fn(&Progress) + Sync);

#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    /// Stop after this many specs have been started in this session,
    /// leaving the store unfinalized.
    pub stop_after: Option<usize>,
    pub progress: Option<ProgressFn<'a>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    Interrupted { remaining: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub status: RunStatus,
    pub spec_count: usize,
    /// Specs executed in this session.
    pub executed: usize,
    /// Failures among all specs, once complete.
    pub failures: usize,
    pub results: usize,
}

/// Starts a new run in `dir`, which must not already hold a manifest.
pub fn run_matrix(
    catalog: &Catalog,
    exposure: &ExposureMatrix,
    config: &MatrixConfig,
    dir: &Path,
    options: RunOptions,
) -> Result<RunSummary, RunError> {
    let enumeration = enumerate_experiments(&BaseUniverse::from_catalog(catalog), config)?;
    std::fs::create_dir_all(dir)?;
    if dir.join(store::MANIFEST_FILE).exists() {
        return Err(RunError::StoreExists(dir.display().to_string()));
    }
    manifest_for(catalog, config, &enumeration).write(dir)?;
    let _ = std::fs::remove_file(dir.join(store::JOURNAL_FILE));
    execute(catalog, exposure, config, &enumeration.specs, &enumeration.specs, dir, options)
}

/// The specs of the run in `dir` that have no journal entry yet.
pub fn remaining_specs(catalog: &Catalog, dir: &Path) -> Result<(RunManifest, Vec<ExperimentSpec>, Vec<ExperimentSpec>), RunError> {
    let manifest = RunManifest::read(dir)?;
    let found = catalog.fingerprint();
    if found != manifest.catalog_fingerprint {
        return Err(RunError::FingerprintMismatch {
            expected: manifest.catalog_fingerprint,
            found,
        });
    }
    let enumeration = enumerate_experiments(&BaseUniverse::from_catalog(catalog), &manifest.matrix)?;
    let done: HashSet<String> = store::read_journal(dir)?.iter().map(JournalEntry::id).collect();
    let remaining = enumeration.specs.iter().filter(|s| !done.contains(&s.id())).cloned().collect();
    Ok((manifest, enumeration.specs, remaining))
}

/// Continues an interrupted run, executing only specs missing from the journal.
pub fn resume(catalog: &Catalog, exposure: &ExposureMatrix, dir: &Path, options: RunOptions) -> Result<RunSummary, RunError> {
    let (manifest, all, remaining) = remaining_specs(catalog, dir)?;
    execute(catalog, exposure, &manifest.matrix, &all, &remaining, dir, options)
}

fn execute(
    catalog: &Catalog,
    exposure: &ExposureMatrix,
    config: &MatrixConfig,
    all: &[ExperimentSpec],
    todo: &[ExperimentSpec],
    dir: &Path,
    options: RunOptions,
) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    let journal = Journal::open(dir)?;

    // Specs sharing a base and input configuration share one feature matrix.
    let mut group_index: HashMap<(&ModelBase, InputConfig), usize> = HashMap::new();
    let mut groups: Vec<Vec<&ExperimentSpec>> = Vec::new();
    for s in todo {
        let g = *group_index.entry((&s.base, s.input)).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(s);
    }

    let workers = if options.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        options.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Io(io::Error::other(e)))?;
    let started = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let cv_options = CvOptions {
        standardize: config.standardize,
    };
    let total = todo.len();

    let io_errors: Vec<io::Error> = pool.install(|| {
        groups
            .par_iter()
            .flat_map_iter(|group| {
                let mut errors = Vec::new();
                let matrix = build_matrix(catalog, exposure, &group[0].base, group[0].input, group[0].behavior);
                for spec in group {
                    let ticket = started.fetch_add(1, Ordering::SeqCst);
                    if options.stop_after.is_some_and(|limit| ticket >= limit) {
                        break;
                    }
                    let outcome = matrix.as_ref().map_err(|e| e.to_string()).and_then(|m| {
                        let y = build_labels(catalog, &m.row_keys, spec.behavior, spec.category).map_err(|e| e.to_string())?;
                        cross_validate_with(&m.values, &y, spec.model, &config.learner, spec.k, spec.seed, cv_options)
                            .map_err(|e| e.to_string())
                    });
                    let ok = outcome.is_ok();
                    let entry = match outcome {
                        Ok(cv) => JournalEntry::Ok(ScoreRecord {
                            spec: (*spec).clone(),
                            cv,
                        }),
                        Err(reason) => JournalEntry::Failed { id: spec.id(), reason },
                    };
                    if let Err(e) = journal.append(&entry) {
                        errors.push(e);
                        break;
                    }
                    let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                    if let Some(report) = options.progress {
                        report(&Progress {
                            id: spec.id(),
                            ok,
                            done: n,
                            total,
                        });
                    }
                }
                errors
            })
            .collect()
    });
    if let Some(e) = io_errors.into_iter().next() {
        return Err(e.into());
    }
    drop(journal);

    let executed = done.load(Ordering::SeqCst);
    let finalized = store::finalize(dir, all)?;
    let timing = RunTiming {
        workers,
        executed,
        failed: finalized.failures,
        elapsed_ms: start.elapsed().as_millis(),
    };
    let mut text = serde_json::to_string_pretty(&timing).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join(store::TIMING_FILE), text)?;
    Ok(RunSummary {
        status: if finalized.missing == 0 {
            RunStatus::Complete
        } else {
            RunStatus::Interrupted {
                remaining: finalized.missing,
            }
        },
        spec_count: all.len(),
        executed,
        failures: finalized.failures,
        results: finalized.results,
    })
}
