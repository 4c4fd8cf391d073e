//! On-disk result store.
//!
//! | file            | content                                                        |
//! |-----------------|----------------------------------------------------------------|
//! | `manifest.json` | run identity: seed, catalog fingerprint, matrix, counts        |
//! | `journal.tsv`   | append-only log in completion order; enumeration order once complete |
//! | `results.tsv`   | successful records in enumeration order (written when complete) |
//! | `failures.tsv`  | `spec_id`, `reason` in enumeration order (written when complete) |
//! | `timing.json`   | wall-clock and worker statistics of the last session           |
//!
//! Journal lines are `ok<TAB><result row>` or `fail<TAB><spec id><TAB><reason>`.
//! A final line without a newline is an interrupted write and is ignored.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::spec::{ExperimentSpec, ScoreRecord, RESULT_HEADER};
use super::MatrixConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const JOURNAL_FILE: &str = "journal.tsv";
pub const RESULTS_FILE: &str = "results.tsv";
pub const FAILURES_FILE: &str = "failures.tsv";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub global_seed: u64,
    pub catalog_fingerprint: String,
    pub matrix: MatrixConfig,
    pub spec_count: usize,
    pub input_count: usize,
    /// Spec counts keyed by `<model>/<base kind>`.
    pub counts: BTreeMap<String, usize>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub workers: usize,
    pub executed: usize,
    pub failed: usize,
    pub elapsed_ms: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JournalEntry {
    Ok(ScoreRecord),
    Failed { id: String, reason: String },
}

impl JournalEntry {
    pub fn id(&self) -> String {
        match self {
            JournalEntry::Ok(r) => r.spec.id(),
            JournalEntry::Failed { id, .. } => id.clone(),
        }
    }
}

fn clean(reason: &str) -> String {
    reason.replace(['\t', '\n', '\r'], " ")
}

fn journal_line(entry: &JournalEntry) -> String {
    match entry {
        JournalEntry::Ok(r) => format!("ok\t{}\n", r.to_row()),
        JournalEntry::Failed { id, reason } => format!("fail\t{id}\t{}\n", clean(reason)),
    }
}

pub struct Journal {
    writer: Mutex<BufWriter<File>>,
}

impl Journal {
    /// Opens for appending, first cutting off any partial trailing line.
    pub fn open(dir: &Path) -> io::Result<Self> {
        let path = dir.join(JOURNAL_FILE);
        if let Ok(bytes) = fs::read(&path) {
            let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            if keep != bytes.len() {
                OpenOptions::new().write(true).open(&path)?.set_len(keep as u64)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append(&self, entry: &JournalEntry) -> io::Result<()> {
        let line = journal_line(entry);
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        w.write_all(line.as_bytes())?;
        w.flush()
    }
}

pub fn read_journal(dir: &Path) -> io::Result<Vec<JournalEntry>> {
    let text = match fs::read_to_string(dir.join(JOURNAL_FILE)) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let bad = |n: usize, m: String| io::Error::new(io::ErrorKind::InvalidData, format!("{JOURNAL_FILE}:{n}: {m}"));
    let mut out = Vec::new();
    for (i, line) in complete.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let entry = if let Some(row) = line.strip_prefix("ok\t") {
            JournalEntry::Ok(ScoreRecord::from_row(row).map_err(|m| bad(i + 1, m))?)
        } else if let Some(rest) = line.strip_prefix("fail\t") {
            let (id, reason) = rest.split_once('\t').unwrap_or((rest, ""));
            JournalEntry::Failed {
                id: id.to_string(),
                reason: reason.to_string(),
            }
        } else {
            return Err(bad(i + 1, "unknown entry kind".into()));
        };
        out.push(entry);
    }
    Ok(out)
}

/// Outcome of writing the final tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finalized {
    pub results: usize,
    pub failures: usize,
    pub missing: usize,
}

/// Writes `results.tsv` and `failures.tsv` in enumeration order when every
/// spec has a journal entry, and rewrites the journal in that order too;
/// otherwise reports how many are missing and writes nothing.
pub fn finalize(dir: &Path, specs: &[ExperimentSpec]) -> io::Result<Finalized> {
    let mut entries: HashMap<String, JournalEntry> = HashMap::new();
    for e in read_journal(dir)? {
        entries.insert(e.id(), e);
    }
    let missing = specs.iter().filter(|s| !entries.contains_key(&s.id())).count();
    if missing > 0 {
        return Ok(Finalized {
            results: 0,
            failures: 0,
            missing,
        });
    }
    let mut results = RESULT_HEADER.join("\t");
    results.push('\n');
    let mut failures = String::from("spec_id\treason\n");
    let mut journal = String::new();
    let (mut n_ok, mut n_fail) = (0, 0);
    for s in specs {
        let entry = &entries[&s.id()];
        journal.push_str(&journal_line(entry));
        match entry {
            JournalEntry::Ok(r) => {
                results.push_str(&r.to_row());
                results.push('\n');
                n_ok += 1;
            }
            JournalEntry::Failed { id, reason } => {
                failures.push_str(&format!("{id}\t{reason}\n"));
                n_fail += 1;
            }
        }
    }
    let staged = dir.join(format!("{JOURNAL_FILE}.tmp"));
    fs::write(&staged, journal)?;
    fs::rename(&staged, dir.join(JOURNAL_FILE))?;
    fs::write(dir.join(RESULTS_FILE), results)?;
    fs::write(dir.join(FAILURES_FILE), failures)?;
    Ok(Finalized {
        results: n_ok,
        failures: n_fail,
        missing: 0,
    })
}

/// Records from a finalized `results.tsv`.
pub fn read_results(path: &Path) -> io::Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != RESULT_HEADER.join("\t") {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}: unexpected header", path.display()),
        ));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            ScoreRecord::from_row(l).map_err(|m| {
                io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {m}", path.display(), i + 2))
            })
        })
        .collect()
}

pub fn results_path(dir: &Path) -> PathBuf {
    dir.join(RESULTS_FILE)
}
