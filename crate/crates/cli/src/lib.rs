//! Command-line front end: `analyze`, `simulate` and `bound` experiments
//! driven by one configuration file.
//!
//! Outputs go to `--out`:
//!
//! * `analyze`: `analysis.json`
//! * `simulate`: `simulation.json`, `ecdf.csv` (`t,ecdf`)
//! * `bound`: `bound.json`, `bound.csv`
//!
//! Exit codes: 0 success, 2 configuration error, 3 a kernel or density
//! condition fails, 4 numerical failure. Failures print a JSON error object
//! on stdout.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;
use umax::ErrorClass;

pub use commands::{build_pipeline, cmd_analyze, cmd_bound, cmd_simulate, Pipeline};
pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] umax::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Condition => 3,
                ErrorClass::Numeric => 4,
            },
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "Config",
            CliError::Io(_) => "Io",
        }
    }

    /// Machine-readable error object.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Core(umax::Error::BoundaryMaximum { gap, maximizer, value }) = self {
            body["gap"] = json!(gap);
            body["maximizer"] = json!(maximizer);
            body["value"] = json!(value);
        }
        json!({ "error": body })
    }
}

#[derive(Debug, Parser)]
#[command(name = "umax", version, about = "Limit laws of U-max statistics on the circle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides `master_seed` from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Maximizers, Hessians, condition checks and the limit constant.
    Analyze,
    /// Replicates of the rescaled statistic against the limit law.
    Simulate,
    /// Poisson approximation bound and Silverman–Brown diagnostics.
    Bound,
}

/// Load, resolve and apply the seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = ExperimentConfig::load(path)?.resolve(base)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

/// Run one subcommand and return the path of its JSON report.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = load_config(path, cli.seed)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let work = || -> Result<PathBuf, CliError> {
        Ok(match cli.command {
            Command::Analyze => {
                cmd_analyze(&cfg, base, &cli.out)?;
                cli.out.join("analysis.json")
            }
            Command::Simulate => {
                cmd_simulate(&cfg, base, &cli.out)?;
                cli.out.join("simulation.json")
            }
            Command::Bound => {
                cmd_bound(&cfg, base, &cli.out)?;
                cli.out.join("bound.json")
            }
        })
    };
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}
