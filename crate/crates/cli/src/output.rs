//! Residual tables and summaries as CSV or JSON.
//!
//! Floats are written with a fixed `{:.12e}` format so that reruns with the
//! same seed produce identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One line of a suite table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub suite: String,
    pub identity: String,
    pub kernel: String,
    pub measure: String,
    pub eta: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const ROW_HEADER: [&str; 12] = [
    "scenario", "suite", "identity", "kernel", "measure", "eta", "lhs", "rhs", "residual", "stderr", "tolerance", "pass",
];

pub const SUMMARY_HEADER: [&str; 6] = ["scenario", "suite", "rows", "passed", "failed", "status"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub rows: usize,
    pub passed: usize,
    pub failed: usize,
}

impl SuiteSummary {
    pub fn from_rows(suite: &str, rows: &[Row]) -> Self {
        let passed = rows.iter().filter(|r| r.pass).count();
        SuiteSummary {
            suite: suite.to_string(),
            rows: rows.len(),
            passed,
            failed: rows.len() - passed,
        }
    }

    pub fn status(&self) -> &'static str {
        if self.failed == 0 {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(|e| CliError::output(dir, e))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::output(path, e))
}

pub fn rows_to_csv(rows: &[Row]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Report(e.to_string());
    w.write_record(ROW_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.suite.clone(),
            r.identity.clone(),
            r.kernel.clone(),
            r.measure.clone(),
            r.eta.clone(),
            fmt(r.lhs),
            fmt(r.rhs),
            fmt(r.residual),
            fmt(r.stderr),
            fmt(r.tolerance),
            r.pass.to_string(),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Report(e.to_string()))
}

/// `<suite>.csv` or `<suite>.json`, plus `<suite>.notes.txt` when there are notes.
pub fn write_suite(dir: &Path, suite: &str, rows: &[Row], notes: &[String], format: Format) -> Result<(), CliError> {
    let path = dir.join(format!("{suite}.{}", format.ext()));
    let bytes = match format {
        Format::Csv => rows_to_csv(rows)?,
        Format::Json => json_bytes(&rows)?,
    };
    write_file(&path, &bytes)?;
    if !notes.is_empty() {
        let mut text = notes.join("\n");
        text.push('\n');
        write_file(&dir.join(format!("{suite}.notes.txt")), text.as_bytes())?;
    }
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Report(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    scenario: &'a str,
    suites: Vec<SummaryEntry<'a>>,
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    suite: &'a str,
    rows: usize,
    passed: usize,
    failed: usize,
    status: &'a str,
}

pub fn write_summary(dir: &Path, scenario: &str, summaries: &[SuiteSummary], format: Format) -> Result<(), CliError> {
    let bytes = match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| CliError::Report(e.to_string());
            w.write_record(SUMMARY_HEADER).map_err(io)?;
            for s in summaries {
                w.write_record([
                    scenario.to_string(),
                    s.suite.clone(),
                    s.rows.to_string(),
                    s.passed.to_string(),
                    s.failed.to_string(),
                    s.status().to_string(),
                ])
                .map_err(io)?;
            }
            w.into_inner().map_err(|e| CliError::Report(e.to_string()))?
        }
        Format::Json => json_bytes(&SummaryJson {
            scenario,
            suites: summaries
                .iter()
                .map(|s| SummaryEntry {
                    suite: &s.suite,
                    rows: s.rows,
                    passed: s.passed,
                    failed: s.failed,
                    status: s.status(),
                })
                .collect(),
        })?,
    };
    write_file(&dir.join(format!("summary.{}", format.ext())), &bytes)
}

#[derive(Deserialize)]
struct SummaryRecord {
    #[allow(dead_code)]
    scenario: String,
    suite: String,
    rows: usize,
    passed: usize,
    failed: usize,
    #[allow(dead_code)]
    status: String,
}

/// Reads `summary.csv` back.
pub fn read_summary(dir: &Path) -> Result<Vec<SuiteSummary>, CliError> {
    let path = dir.join("summary.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::Report(format!("{}: {e}", path.display())))?;
    r.deserialize::<SummaryRecord>()
        .map(|rec| {
            let rec = rec.map_err(|e| CliError::Report(format!("{}: {e}", path.display())))?;
            Ok(SuiteSummary {
                suite: rec.suite,
                rows: rec.rows,
                passed: rec.passed,
                failed: rec.failed,
            })
        })
        .collect()
}
