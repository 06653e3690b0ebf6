use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use zclaim_sim::privacy::{config, run_privacy};
use zclaim_sim::runner::{run_scenario, Check};
use zclaim_sim::scenario::ScenarioConfig;

#[derive(Parser)]
#[command(
    name = "zclaim-sim",
    version,
    about = "Scenario runner and amount-splitting analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write its trace, metrics and checks.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every bound, tabulate E[X_j | T=t] and split one total end to end.
    Privacy {
        #[arg(long)]
        h: u32,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the bound report for (h, k) to stdout.
    CheckBounds {
        #[arg(long)]
        h: u32,
        #[arg(long)]
        k: u32,
    },
}

fn report(checks: &[Check]) -> bool {
    for c in checks {
        eprintln!(
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    checks.iter().all(|c| c.passed)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
        } => {
            let text = fs::read_to_string(&scenario)
                .with_context(|| format!("reading {}", scenario.display()))?;
            let mut cfg =
                ScenarioConfig::parse(&text).with_context(|| scenario.display().to_string())?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let output = run_scenario(&cfg)?;
            output.write(&out)?;
            Ok(report(&output.checks))
        }
        Command::Privacy { h, k, out, seed } => {
            let output = run_privacy(h, k, seed)?;
            output.write(&out)?;
            Ok(report(&output.checks))
        }
        Command::CheckBounds { h, k } => {
            let report = zclaim_core::splitting::check_bounds(&config(h, k)?)?;
            print!("{}", report.to_csv());
            eprintln!(
                "{} rows, {} failed, {} attributed",
                report.rows.len(),
                report.failures().count(),
                report.attributed().count()
            );
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
