//! Text and JSON rendering of average tables and p-value tables.
//!
//! Numbers are printed with six decimals, NaN as `nan`, and missing cells
//! as `-`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{AverageTable, Gap, Hypothesis, SuiteOutcome, TTestReport};
use crate::features::InputVariant;
use crate::targets::Behavior;

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), num)
}

fn json_num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("nan")
    }
}

pub fn render_average_table(table: &AverageTable) -> String {
    let mut out = String::from("behavior\trow");
    for v in InputVariant::ALL {
        out.push('\t');
        out.push_str(v.label());
    }
    out.push_str("\tTotal Average\n");
    for row in &table.rows {
        let behavior = row.behavior.map_or("both", |b| b.code());
        let _ = write!(out, "{behavior}\t{}", row.kind);
        for c in row.cells {
            let _ = write!(out, "\t{}", cell(c));
        }
        let _ = writeln!(out, "\t{}", cell(row.total));
    }
    out
}

const PVALUE_HEADER: &str = "model\tbase\tcategory\tviewing\tgroup_a\tgroup_b\tn_a\tn_b\tmean_a\tmean_b\tt\tdf\tp\n";

/// Rows of one hypothesis and behavior, in suite order.
pub fn render_pvalue_table(hypothesis: Hypothesis, behavior: Behavior, reports: &[TTestReport]) -> String {
    let mut out = String::from(PVALUE_HEADER);
    for r in reports.iter().filter(|r| r.hypothesis == hypothesis && r.behavior == behavior) {
        let t = &r.test;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model,
            r.base_kind,
            r.category,
            r.viewing,
            r.group_a,
            r.group_b,
            t.n_a,
            t.n_b,
            num(t.mean_a),
            num(t.mean_b),
            num(t.t_stat),
            num(t.df),
            num(t.p_value)
        );
    }
    out
}

pub fn render_gaps(gaps: &[Gap]) -> String {
    let mut out = String::from("hypothesis\tbehavior\tmodel\tbase\tcategory\tviewing\treason\n");
    for g in gaps {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            g.hypothesis, g.behavior, g.model, g.base_kind, g.category, g.viewing, g.reason
        );
    }
    out
}

/// Structured form of the whole report; NaN becomes the string `"nan"`.
pub fn report_json(tables: &[AverageTable], suite: &SuiteOutcome) -> Value {
    let opt = |v: Option<f64>| v.map_or(Value::Null, json_num);
    let tables: Vec<Value> = tables
        .iter()
        .map(|t| {
            json!({
                "model": t.model.code(),
                "base": t.base_kind.code(),
                "columns": InputVariant::ALL.map(|v| v.code()),
                "rows": t.rows.iter().map(|r| json!({
                    "behavior": r.behavior.map(|b| b.code()),
                    "row": r.kind.to_string(),
                    "cells": r.cells.iter().map(|c| opt(*c)).collect::<Vec<_>>(),
                    "total": opt(r.total),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let tests: Vec<Value> = suite
        .reports
        .iter()
        .map(|r| {
            json!({
                "hypothesis": r.hypothesis.code(),
                "behavior": r.behavior.code(),
                "model": r.model.code(),
                "base": r.base_kind.code(),
                "category": r.category,
                "viewing": r.viewing.code(),
                "group_a": r.group_a.code(),
                "group_b": r.group_b.code(),
                "n_a": r.test.n_a,
                "n_b": r.test.n_b,
                "mean_a": json_num(r.test.mean_a),
                "mean_b": json_num(r.test.mean_b),
                "t": json_num(r.test.t_stat),
                "df": json_num(r.test.df),
                "p": json_num(r.test.p_value),
            })
        })
        .collect();
    let gaps: Vec<Value> = suite
        .gaps
        .iter()
        .map(|g| {
            json!({
                "hypothesis": g.hypothesis.code(),
                "behavior": g.behavior.code(),
                "model": g.model.code(),
                "base": g.base_kind.code(),
                "category": g.category,
                "viewing": g.viewing.code(),
                "reason": g.reason,
            })
        })
        .collect();
    json!({ "average_tables": tables, "t_tests": tests, "gaps": gaps })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFiles {
    pub average_tables: Vec<PathBuf>,
    pub pvalue_tables: Vec<PathBuf>,
    pub gaps: PathBuf,
    pub json: PathBuf,
}

/// Writes `averages_<model>_<base>.tsv`, `pvalues_<hypothesis>_<behavior>.tsv`
/// for each behavior present, `gaps.tsv` and `report.json`.
pub fn write_report(dir: &Path, tables: &[AverageTable], suite: &SuiteOutcome) -> io::Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let mut files = ReportFiles::default();
    for t in tables {
        let path = dir.join(format!("averages_{}_{}.tsv", t.model.code(), t.base_kind.code()));
        fs::write(&path, render_average_table(t))?;
        files.average_tables.push(path);
    }
    let mut behaviors: Vec<Behavior> = suite.reports.iter().map(|r| r.behavior).collect();
    behaviors.extend(suite.gaps.iter().map(|g| g.behavior));
    behaviors.sort();
    behaviors.dedup();
    for h in Hypothesis::ALL {
        for &b in &behaviors {
            let path = dir.join(format!("pvalues_{}_{}.tsv", h.code(), b.code()));
            fs::write(&path, render_pvalue_table(h, b, &suite.reports))?;
            files.pvalue_tables.push(path);
        }
    }
    files.gaps = dir.join("gaps.tsv");
    fs::write(&files.gaps, render_gaps(&suite.gaps))?;
    files.json = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&report_json(tables, suite)).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(&files.json, text)?;
    Ok(files)
}
