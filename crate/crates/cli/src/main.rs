//! `adbench`: synthesize or ingest a panel, run the experiment matrix, and
//! report average tables and hypothesis tests.

mod run_config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::io::Write;

use adbench_core::data::{parse_catalog, write_catalog, Catalog, CatalogPaths};
use adbench_core::exposure::compute_exposure;
use adbench_core::runner::store::{MANIFEST_FILE, RESULTS_FILE};
use adbench_core::runner::{
    count_experiments, enumerate_experiments, read_results, remaining_specs, resume, run_matrix, BaseUniverse, Counts,
    Progress, RunError, RunOptions, RunStatus, RunSummary,
};
use adbench_core::stats::{
    average_tables, hypothesis_suite, paired_t_test, welch_t_test, GeneralAverageMode, SuiteOptions, TTest,
};
use adbench_core::synthgen::{generate_panel, id_universe, GenConfig, SynthError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use run_config::{prefer_file, DataSource, Overrides, RunConfig};

#[derive(Debug)]
pub enum Failure {
    Parse(String),
    Validation(String),
    Execution(String),
    Gaps(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 3,
            Failure::Validation(_) => 4,
            Failure::Execution(_) => 5,
            Failure::Gaps(_) => 6,
        }
    }

    pub fn context(self, what: &str) -> Self {
        let wrap = |m: String| format!("{what}: {m}");
        match self {
            Failure::Parse(m) => Failure::Parse(wrap(m)),
            Failure::Validation(m) => Failure::Validation(wrap(m)),
            Failure::Execution(m) => Failure::Execution(wrap(m)),
            Failure::Gaps(m) => Failure::Gaps(wrap(m)),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, m) = match self {
            Failure::Parse(m) => ("parse error", m),
            Failure::Validation(m) => ("invalid input", m),
            Failure::Execution(m) => ("execution failed", m),
            Failure::Gaps(m) => ("incomplete report", m),
        };
        write!(f, "{kind}: {m}")
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Io(_) => Failure::Execution(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Data(_) => Failure::Execution(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "adbench", version, about = "Advert exposure vs demographics purchase-prediction benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel and write its five tables.
    Synth(SynthArgs),
    /// Validate a catalog directory and print its fingerprint.
    Ingest(IngestArgs),
    /// Enumerate and execute the experiment matrix.
    Run(RunArgs),
    /// Build average tables and hypothesis tests from a finished store.
    Report(ReportArgs),
    /// Two-sample t-test on two columns of a TSV or CSV file.
    Ttest(TtestArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config (TOML); defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Mirrors `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory holding users.tsv, products.tsv, survey.tsv, viewing.tsv, broadcasts.tsv.
    #[arg(long)]
    catalog: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Continue the run already in the output directory.
    #[arg(long)]
    resume: bool,
    /// Print the enumeration counts and exit without executing.
    #[arg(long)]
    dry_run: bool,
    /// Mirrors `workers`; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Mirrors `matrix.global_seed`.
    #[arg(long)]
    global_seed: Option<u64>,
    /// Mirrors `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after starting this many experiments, leaving the run resumable.
    #[arg(long)]
    stop_after: Option<usize>,
    /// Emit one JSON object per finished experiment on stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AverageMode {
    CategoryMeans,
    AllExperiments,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// How the General Average row is formed.
    #[arg(long, value_enum, default_value = "category-means")]
    general_average: AverageMode,
    /// Pair samples by base id.
    #[arg(long)]
    paired: bool,
    /// Score each experiment by the F1 of its summed fold confusions.
    #[arg(long)]
    pooled: bool,
}

#[derive(Args)]
struct TtestArgs {
    /// Tab-separated file with a header row (comma-separated if it ends in `.csv`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    column_a: String,
    #[arg(long)]
    column_b: String,
    /// Paired test over rows where both columns have a value.
    #[arg(long)]
    paired: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Ttest(a) => cmd_ttest(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn load_catalog(dir: &Path) -> Result<Catalog, Failure> {
    parse_catalog(&CatalogPaths::in_dir(dir)).map_err(|e| Failure::Parse(e.to_string()))
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let mut config = GenConfig::default();
    let mut seed_in_file = None;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        config = GenConfig::from_toml(&text).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| Failure::Parse(e.to_string()))?;
        seed_in_file = table.get("seed").map(|_| config.seed);
    }
    if let Some(seed) = prefer_file("seed", seed_in_file, args.seed) {
        config.seed = seed;
    }
    let catalog = generate_panel(&config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::Execution(format!("{}: {e}", args.out.display())))?;
    write_catalog(&catalog, &CatalogPaths::in_dir(&args.out)).map_err(|e| Failure::Execution(e.to_string()))?;
    println!("wrote {} (fingerprint {})", args.out.display(), catalog.fingerprint());
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<(), Failure> {
    let catalog = load_catalog(&args.catalog)?;
    let summary = json!({
        "fingerprint": catalog.fingerprint(),
        "rows": catalog.row_counts(),
        "advert_matched": catalog.advert_matched().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn print_counts(counts: &Counts) {
    println!("inputs: {}", counts.input_count);
    let mut per_model = std::collections::BTreeMap::<&str, usize>::new();
    for (key, n) in &counts.counts {
        let model = key.split('/').next().unwrap_or(key);
        *per_model.entry(model).or_default() += n;
    }
    for (key, n) in &counts.counts {
        println!("experiments {key}: {n}");
    }
    for (model, n) in per_model {
        println!("experiments per model {model}: {n}");
    }
    println!("total experiments: {}", counts.spec_count);
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let config = RunConfig::load(
        &args.config,
        Overrides {
            out: args.out,
            workers: args.workers,
            global_seed: args.global_seed,
        },
    )?;

    if args.dry_run {
        let universe = match &config.data {
            DataSource::Synth(gen) => {
                gen.validate()?;
                id_universe(gen)
            }
            DataSource::Catalog(dir) => BaseUniverse::from_catalog(&load_catalog(dir)?),
        };
        print_counts(&count_experiments(&universe, &config.matrix)?);
        return Ok(());
    }

    let catalog = match &config.data {
        DataSource::Synth(gen) => generate_panel(gen)?,
        DataSource::Catalog(dir) => load_catalog(dir)?,
    };
    let exposure = compute_exposure(catalog.viewing(), catalog.broadcasts());

    let stderr = Mutex::new(std::io::stderr());
    let report = |p: &Progress| {
        let line = json!({ "done": p.done, "total": p.total, "id": p.id, "ok": p.ok });
        let _ = writeln!(stderr.lock().expect("stderr lock"), "{line}");
    };
    let options = RunOptions {
        workers: config.workers,
        stop_after: args.stop_after,
        progress: args.progress.then_some(&report as _),
    };

    let summary = if args.resume {
        if !config.out.join(MANIFEST_FILE).exists() {
            return Err(Failure::Validation(format!("{} holds no run to resume", config.out.display())));
        }
        let (manifest, _, remaining) = remaining_specs(&catalog, &config.out)?;
        if manifest.matrix != config.matrix {
            eprintln!("warning: resuming with the matrix recorded in the store's manifest");
        }
        println!("total experiments: {}", manifest.spec_count);
        println!("remaining: {}", remaining.len());
        resume(&catalog, &exposure, &config.out, options)?
    } else {
        let enumeration = enumerate_experiments(&BaseUniverse::from_catalog(&catalog), &config.matrix)?;
        print_counts(&enumeration.counts);
        drop(enumeration);
        run_matrix(&catalog, &exposure, &config.matrix, &config.out, options)?
    };
    print_summary(&summary, &config.out);
    Ok(())
}

fn print_summary(summary: &RunSummary, out: &Path) {
    match summary.status {
        RunStatus::Complete => println!(
            "complete: {} results, {} failures, {} executed in this session -> {}",
            summary.results,
            summary.failures,
            summary.executed,
            out.display()
        ),
        RunStatus::Interrupted { remaining } => println!(
            "interrupted: {remaining} experiments remain; continue with --resume -> {}",
            out.display()
        ),
    }
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let results = args.store.join(RESULTS_FILE);
    if !results.exists() {
        return Err(Failure::Validation(format!(
            "{} has no {RESULTS_FILE}; finish the run with --resume first",
            args.store.display()
        )));
    }
    let mut records = read_results(&results).map_err(|e| Failure::Parse(format!("{}: {e}", results.display())))?;
    if args.pooled {
        for r in &mut records {
            let m = r.cv.pooled();
            r.cv.mean_precision = m.precision;
            r.cv.mean_recall = m.recall;
            r.cv.mean_f1 = m.f1;
        }
    }
    let mode = match args.general_average {
        AverageMode::CategoryMeans => GeneralAverageMode::CategoryMeans,
        AverageMode::AllExperiments => GeneralAverageMode::AllExperiments,
    };
    let tables = average_tables(&records, mode);
    let suite = hypothesis_suite(&records, SuiteOptions { paired: args.paired });
    let files = adbench_core::stats::write_report(&args.out, &tables, &suite)
        .map_err(|e| Failure::Execution(format!("{}: {e}", args.out.display())))?;
    for p in files.average_tables.iter().chain(&files.pvalue_tables) {
        println!("{}", p.display());
    }
    println!("{}", files.json.display());
    if suite.gaps.is_empty() {
        Ok(())
    } else {
        Err(Failure::Gaps(format!(
            "{} comparisons lack samples; see {}",
            suite.gaps.len(),
            files.gaps.display()
        )))
    }
}

fn number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

fn read_columns(args: &TtestArgs) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let delimiter = if args.input.extension().is_some_and(|e| e == "csv") { b',' } else { b'\t' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(&args.input)
        .map_err(|e| Failure::Parse(format!("{}: {e}", args.input.display())))?;
    let headers = reader.headers().map_err(|e| Failure::Parse(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::Validation(format!("no column `{name}` in {}", args.input.display())))
    };
    let (ia, ib) = (find(&args.column_a)?, find(&args.column_b)?);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Failure::Parse(e.to_string()))?;
        let cell = |i: usize| -> Result<Option<f64>, Failure> {
            match row.get(i).map(str::trim) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(|v| (!v.is_nan()).then_some(v))
                    .map_err(|_| Failure::Parse(format!("{}: row {}: `{s}` is not a number", args.input.display(), line + 2))),
            }
        };
        let (va, vb) = (cell(ia)?, cell(ib)?);
        if args.paired {
            if let (Some(x), Some(y)) = (va, vb) {
                a.push(x);
                b.push(y);
            }
        } else {
            a.extend(va);
            b.extend(vb);
        }
    }
    Ok((a, b))
}

fn cmd_ttest(args: TtestArgs) -> Result<(), Failure> {
    let (a, b) = read_columns(&args)?;
    let test: TTest = if args.paired { paired_t_test(&a, &b) } else { welch_t_test(&a, &b) }
        .map_err(|e| Failure::Validation(e.to_string()))?;
    println!("test\t{}", if args.paired { "paired" } else { "welch" });
    println!("n_a\t{}", test.n_a);
    println!("n_b\t{}", test.n_b);
    println!("mean_a\t{}", number(test.mean_a));
    println!("mean_b\t{}", number(test.mean_b));
    println!("t_stat\t{}", number(test.t_stat));
    println!("df\t{}", number(test.df));
    println!("p_value\t{}", number(test.p_value));
    Ok(())
}
