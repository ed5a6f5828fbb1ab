use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use hjcell_cli::{compare_runs, run_scenario, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "hjcell", version, about = "Effective Hamiltonians of 1-d viscous Hamilton-Jacobi equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Root directory for run outputs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for parallel scans.
        #[arg(long, env = "HJCELL_WORKERS")]
        workers: Option<usize>,
        /// Multiplies every tolerance in the configuration.
        #[arg(long)]
        tol_scale: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the CSV outputs of two runs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out, workers, tol_scale, seed } => {
            let cfg = ScenarioConfig::load(&config)?;
            let (dir, manifest) = run_scenario(&cfg, &RunOptions { out_root: out, workers, tol_scale, seed })?;
            println!("{}", dir.display());
            println!("{}", serde_json::to_string_pretty(&manifest.summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { a, b, tol } => {
            let report = compare_runs(&a, &b, tol)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.within_tolerance() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}
