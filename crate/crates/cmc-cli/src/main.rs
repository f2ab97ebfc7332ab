//! `cmc-lab` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! conditioning, 4 chart-domain error, 5 failed acceptance check.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmc_lab::GeomError;
use thiserror::Error;

use crate::commands::{Output, Which};
use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("acceptance check failed: {0}")]
    Acceptance(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Geom(e) => e.exit_code() as u8,
            CliError::Io(..) => 1,
            CliError::Acceptance(_) => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cmc-lab", version, about = "Partial curvature invariants and approximate CMC spheres")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `rng_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Computations are sequential; only 1 is accepted.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true)]
    eps_min: Option<f64>,
    #[arg(long, global = true)]
    eps_max: Option<f64>,
    #[arg(long, global = true)]
    eps_count: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Riemann tensor and symmetry checks at the configured point.
    Curvature,
    /// Partial invariants of the configured plane.
    Invariants,
    /// Critical point of the partial scalar curvature from the configured seed.
    FindCritical,
    /// One of the verification suites.
    Verify {
        #[arg(long, value_enum)]
        which: Which,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads != 1 {
        return Err(GeomError::Config(format!("--threads: only 1 is supported, got {}", cli.threads)).into());
    }
    let path = cli.config.as_ref().ok_or_else(|| GeomError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| GeomError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(s) = cli.seed {
        cfg.rng_seed = s;
    }
    cfg.override_sweep(cli.eps_min, cli.eps_max, cli.eps_count)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| GeomError::Config("field `output_dir` missing and no --out given".into()))?;
    let out = Output::new(dir)?;
    let summary = match &cli.command {
        Command::Curvature => commands::curvature(&cfg, &out)?,
        Command::Invariants => commands::invariants_cmd(&cfg, &out)?,
        Command::FindCritical => commands::find_critical_cmd(&cfg, &out)?,
        Command::Verify { which } => {
            let (summary, pass) = commands::verify(&cfg, *which, &out)?;
            println!("{}", serde_json::to_string(&summary).expect("json"));
            if !pass {
                return Err(CliError::Acceptance(format!("see {}", out.dir().display())));
            }
            return Ok(());
        }
    };
    println!("{}", serde_json::to_string(&summary).expect("json"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
