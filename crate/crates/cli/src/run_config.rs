use std::fmt::Display;
use std::path::{Path, PathBuf};

use adbench_core::runner::MatrixConfig;
use adbench_core::synthgen::GenConfig;
use serde::Deserialize;

use crate::Failure;

/// On-disk layout of `adbench run --config`.
///
/// ```toml
/// catalog = "panel"      # directory holding the five tables, or
/// # [synth] ...          # a generator config
/// out = "store"
/// workers = 4
///
/// [matrix]
/// models = ["svm", "gbrt", "logistic"]
/// global_seed = 7
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    catalog: Option<PathBuf>,
    synth: Option<GenConfig>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    #[serde(default)]
    matrix: toml::Table,
}

#[derive(Clone, Debug)]
pub enum DataSource {
    Catalog(PathBuf),
    Synth(GenConfig),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub data: DataSource,
    pub out: PathBuf,
    pub workers: usize,
    pub matrix: MatrixConfig,
}

/// Values given on the command line for keys the file may also set.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub global_seed: Option<u64>,
}

/// The file value wins; a differing flag value only triggers a warning.
pub fn prefer_file<T: PartialEq + Display>(key: &str, file: Option<T>, flag: Option<T>) -> Option<T> {
    match (file, flag) {
        (Some(f), Some(c)) => {
            if f != c {
                eprintln!("warning: config sets {key} = {f}; ignoring the command-line value {c}");
            }
            Some(f)
        }
        (f, c) => f.or(c),
    }
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: Overrides) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), overrides)
            .map_err(|f| f.context(&path.display().to_string()))
    }

    /// Relative paths in `text` are taken relative to `base`.
    pub fn parse(text: &str, base: &Path, overrides: Overrides) -> Result<Self, Failure> {
        let file: RunConfigFile = toml::from_str(text).map_err(|e| Failure::Parse(e.to_string()))?;
        let data = match (file.catalog, file.synth) {
            (Some(dir), None) => DataSource::Catalog(resolve(base, dir)),
            (None, Some(gen)) => DataSource::Synth(gen),
            (Some(_), Some(_)) => {
                return Err(Failure::Validation("give either `catalog` or `[synth]`, not both".into()));
            }
            (None, None) => return Err(Failure::Validation("missing data source: set `catalog` or `[synth]`".into())),
        };
        let seed_in_file = file.matrix.get("global_seed").is_some();
        let mut matrix: MatrixConfig = toml::Value::Table(file.matrix)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::Parse(format!("[matrix]: {e}")))?;
        let file_seed = seed_in_file.then_some(matrix.global_seed);
        if let Some(seed) = prefer_file("matrix.global_seed", file_seed, overrides.global_seed) {
            matrix.global_seed = seed;
        }
        let out = prefer_file(
            "out",
            file.out.map(|p| resolve(base, p)).map(DisplayPath),
            overrides.out.map(DisplayPath),
        )
        .ok_or_else(|| Failure::Validation("no output directory: set `out` or pass --out".into()))?;
        let workers = prefer_file("workers", file.workers, overrides.workers).unwrap_or(0);
        Ok(Self {
            data,
            out: out.0,
            workers,
            matrix,
        })
    }
}

#[derive(PartialEq)]
struct DisplayPath(PathBuf);

impl Display for DisplayPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.display())
    }
}
