use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convlevy_cli::{output, resolve_suites, run_simulate, run_verify, verdict, CliError, Format, Overrides, Scenario};

#[derive(Parser)]
#[command(name = "convlevy", version, about = "Simulate convoluted Lévy processes and verify their identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump simulated jump paths and convoluted paths as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Paths per kernel.
        #[arg(long, default_value_t = 3)]
        paths: u64,
    },
    /// Run verification suites and write residual tables.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suites or groups (simulate, stransform, all), comma separated.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Monte Carlo paths per check, overriding the scenario.
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Print the summary of a previous `verify` run.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn scenario(&self, n: Option<u64>) -> Result<Scenario, CliError> {
        let mut s = Scenario::load(&self.config)?;
        Overrides { seed: self.seed, n }.apply(&mut s)?;
        Ok(s)
    }
}

fn print_summary(summaries: &[output::SuiteSummary]) {
    for s in summaries {
        println!("{:<18} {:>5} rows {:>5} failed  {}", s.suite, s.rows, s.failed, s.status());
    }
    let failed: usize = summaries.iter().map(|s| s.failed).sum();
    let total: usize = summaries.iter().map(|s| s.rows).sum();
    println!("{} suites, {total} rows, {failed} failed", summaries.len());
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate { common, paths } => {
            let s = common.scenario(None)?;
            let files = run_simulate(&s, &common.out, paths)?;
            eprintln!("wrote {} files to {}", files.len(), common.out.display());
            Ok(0)
        }
        Command::Verify { common, suite, n, format } => {
            let s = common.scenario(n)?;
            let suites = resolve_suites(&suite)?;
            let summaries = run_verify(&s, &suites, &common.out, format)?;
            print_summary(&summaries);
            Ok(verdict(&summaries))
        }
        Command::Report { out } => {
            let summaries = output::read_summary(&out)?;
            print_summary(&summaries);
            Ok(verdict(&summaries))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
