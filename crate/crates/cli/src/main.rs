//! `ephoresim`: batch front-end that turns one JSON experiment config into
//! CSV/JSON artifacts under a timestamped run directory.

// `!(x > 0.0)` is the NaN-rejecting form of a positivity check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{ExperimentConfig, Format};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "ephoresim", version, about = "Electrophoretic molecular communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parent directory of the run directory (overrides output.directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo seed (overrides simulation.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials (overrides simulation.trials).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Write only this artifact format (overrides output.formats).
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Design the field and write its parameters and group-centre trajectory.
    Design,
    /// Trace the expected receiver count for a bit sequence.
    Signal,
    /// Estimate the bit error rate.
    Ber,
    /// Estimate the bit error rate over a list of parameter values.
    Sweep,
    /// Molecule response and radius feasibility under the field.
    Bbo,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Design => "design",
            Self::Signal => "signal",
            Self::Ber => "ber",
            Self::Sweep => "sweep",
            Self::Bbo => "bbo",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.simulation.trials = trials;
    }
    if let Some(f) = cli.format {
        cfg.output.formats = vec![match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }];
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Caps the global rayon pool from `EPHORESIM_THREADS`.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EPHORESIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("EPHORESIM_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    configure_threads()?;
    let cfg = resolve_config(cli)?;
    let mut run = output::RunDir::create(&cfg.output.directory, cli.command.name())?;
    let outcome = run.write_json("config.json", &cfg).and_then(|()| match cli.command {
        Command::Design => commands::design(&cfg, &mut run),
        Command::Signal => commands::signal(&cfg, &mut run),
        Command::Ber => commands::ber(&cfg, &mut run),
        Command::Sweep => commands::sweep(&cfg, &mut run),
        Command::Bbo => commands::bbo(&cfg, &mut run),
    });
    let path = run.path().to_path_buf();
    if let Err(e) = outcome {
        // a failed run leaves no partial directory behind
        let _ = std::fs::remove_dir_all(&path);
        return Err(e);
    }
    run.finish(&cfg, cli.config.as_deref())?;
    Ok(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ephoresim {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
