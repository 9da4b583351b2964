use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use holoquads_cli::commands::{self, RunOptions};
use holoquads_cli::config::RunConfig;
use holoquads_cli::CliError;

#[derive(Parser)]
#[command(name = "holoquads", version, about = "Holographic kicked-Ising simulation: build, simulate, estimate, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override `sampling.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shot-level worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write holographic (and, when small enough, flat) circuits and resource counts.
    Build,
    /// Sample shots and write shot files, herald statistics and the manifest.
    Simulate,
    /// Compute reference correlators by TEBD.
    Oracle,
    /// Estimate correlators from shot files.
    Estimate,
    /// Normalized errors, histogram and heatmap against the oracle.
    Compare,
    /// Print resources, herald statistics and the comparison summary.
    Report,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let path = cli.config.ok_or_else(|| CliError::config("--config PATH is required"))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        if i64::try_from(seed).is_err() {
            return Err(CliError::config("--seed must be at most 2^63 - 1 so the manifest can record it"));
        }
        cfg.sampling.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    if cli.workers == Some(0) {
        return Err(CliError::config("--workers must be at least 1"));
    }
    let opts = RunOptions { workers: cli.workers };
    match cli.command {
        Command::Build => commands::cmd_build(&cfg),
        Command::Simulate => commands::cmd_simulate(&cfg, opts),
        Command::Oracle => commands::cmd_oracle(&cfg),
        Command::Estimate => commands::cmd_estimate(&cfg, opts),
        Command::Compare => commands::cmd_compare(&cfg, opts),
        Command::Report => commands::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
