//! `ziegler`: command-line driver for the Ziegler pendulum laboratory.
//!
//! Each subcommand reads one JSON run configuration and writes CSV/JSON
//! outputs plus a `run.json` sidecar into the output directory. Exit codes:
//! 0 on success (including a negative periodicity result), 2 for configuration
//! or I/O problems, 3 for numerical failures. Errors are reported as one line
//! of JSON on standard error.

mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "ziegler", version, about = "Ziegler pendulum simulations and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON). A `run.json` sidecar from an earlier run works too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads for sweeps and seed studies.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides the tangent-vector seed of exponent computations.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Validate the configuration and print the effective version of it without running.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Integrate one trajectory and write every accepted step.
    Simulate,
    /// Append energy and momentum-integral columns to a trajectory CSV.
    Observe,
    /// Search for a symmetric periodic orbit of the reduced system.
    Periodic,
    /// Largest Lyapunov exponent by repeated renormalization.
    Mlce,
    /// Section points of a projected trajectory.
    Section,
    /// Force, initial-condition or anchor-grid sweeps.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Observe => "observe",
            Command::Periodic => "periodic",
            Command::Mlce => "mlce",
            Command::Section => "section",
            Command::Sweep => "sweep",
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::config("--config <path> is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if cfg.task.command() != cli.command.name() {
        return Err(CliError::config(format!(
            "configuration describes a `{}` task but `{}` was requested",
            cfg.task.command(),
            cli.command.name()
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if cli.dry_run {
        let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::config(e.to_string()))?;
        let _ = writeln!(std::io::stdout().lock(), "{text}");
        return Ok(());
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start {jobs} workers: {e}")))?;
    }
    log::info!("{} with {}", cli.command.name(), path.display());
    commands::run(&cfg, &cli.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ZIEGLER_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
