//! Batch runner for the verification suites of `convlevy`.
//!
//! A scenario file fixes the jump measure, kernels, test functions and
//! tolerances; [`run_verify`] executes the selected suites and writes one
//! residual table per suite plus a summary into an output directory.

pub mod config;
pub mod output;
pub mod suites;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::Scenario;
pub use output::{Format, Row, SuiteSummary};
pub use suites::{resolve_suites, Suite};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] convlevy::Error),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error("cannot read report: {0}")]
    Report(String),
}

impl CliError {
    /// Every error is a usage or environment problem, never a failed identity.
    pub fn exit_code(&self) -> i32 {
        2
    }

    pub(crate) fn output(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

/// Overrides applied on top of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) -> Result<(), CliError> {
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(n) = self.n {
            if n == 0 {
                return Err(CliError::Config("--n must be positive".into()));
            }
            s.n = n;
        }
        Ok(())
    }
}

/// Runs `suites` on `scenario`, writes the tables and returns the summary.
/// Diagnostics go to standard error.
pub fn run_verify(scenario: &Scenario, suites: &[Suite], out: &Path, format: Format) -> Result<Vec<SuiteSummary>, CliError> {
    output::prepare_dir(out)?;
    let mut summaries = Vec::new();
    for &suite in suites {
        let started = std::time::Instant::now();
        let result = suites::run_suite(scenario, suite)?;
        for note in &result.notes {
            eprintln!("[{}] note: {note}", suite.name());
        }
        let summary = SuiteSummary::from_rows(suite.name(), &result.rows);
        eprintln!(
            "[{}] {} rows, {} failed ({:.1} s)",
            suite.name(),
            summary.rows,
            summary.failed,
            started.elapsed().as_secs_f64()
        );
        for r in result.rows.iter().filter(|r| !r.pass) {
            eprintln!(
                "[{}] FAIL {} eta={} residual={:.3e} tolerance={:.3e}",
                suite.name(),
                r.identity,
                r.eta,
                r.residual,
                r.tolerance
            );
        }
        output::write_suite(out, suite.name(), &result.rows, &result.notes, format)?;
        summaries.push(summary);
    }
    output::write_summary(out, &scenario.id, &summaries, format)?;
    Ok(summaries)
}

/// `0` when every row passed, `1` otherwise.
pub fn verdict(summaries: &[SuiteSummary]) -> i32 {
    if summaries.iter().all(|s| s.failed == 0) {
        0
    } else {
        1
    }
}

/// Stream slot of the `simulate` subcommand, clear of the suites' slots.
const SIMULATE_STREAM: u64 = 10_000;

/// Dumps `paths` jump paths per kernel (`jumps_k<i>_p<j>.csv`, columns `s,x`)
/// with the convoluted process on the scenario grid (`M_k<i>_p<j>.csv`,
/// columns `t,M`). Returns the written file names.
pub fn run_simulate(scenario: &Scenario, out: &Path, paths: u64) -> Result<Vec<String>, CliError> {
    use convlevy::conv::{conv_path_direct, simulation_window};
    use convlevy::levy::simulate_path;
    use convlevy::mc::StreamKey;

    output::prepare_dir(out)?;
    let measure = scenario.measure()?;
    let grid = scenario.grid();
    let mut written = Vec::new();
    for (i, k) in scenario.kernels()?.iter().enumerate() {
        let window = simulation_window(k, scenario.horizon)?;
        let key = StreamKey::new(scenario.seed, SIMULATE_STREAM + i as u64);
        for j in 0..paths {
            let path = simulate_path(&measure, window, key, j)?;
            let m = conv_path_direct(k, &path, &grid)?;
            for (name, text) in [(format!("jumps_k{i}_p{j}.csv"), path.to_csv()), (format!("M_k{i}_p{j}.csv"), m.to_csv())] {
                let p = out.join(&name);
                std::fs::write(&p, text).map_err(|e| CliError::output(&p, e))?;
                written.push(name);
            }
        }
    }
    Ok(written)
}
