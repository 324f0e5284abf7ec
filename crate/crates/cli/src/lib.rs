//! Experiment runner: reads a TOML experiment file, runs one command and
//! writes CSV artifacts plus a `manifest.txt` of `key=value` lines.

mod commands;
pub mod config;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use commands::{run_command, Outcome};
pub use config::{Command, ExperimentConfig, NamedModel, Params};
pub use output::{manifest_text, write_artifacts};

/// Every assertion held.
pub const EXIT_PASS: i32 = 0;
/// An invariant or bound was violated.
pub const EXIT_VIOLATION: i32 = 1;
/// The configuration could not be used.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] hre_core::Error),

    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use hre_core::Error as E;
        match self {
            CliError::Core(
                E::HypothesisViolated(_)
                | E::EgorovBudgetExceeded { .. }
                | E::WeakNullityExhausted { .. }
                | E::Unattainable(_)
                | E::OverlappingSupports { .. },
            ) => EXIT_VIOLATION,
            _ => EXIT_CONFIG,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Result of one invocation, as reported to the caller.
#[derive(Debug)]
pub struct RunResult {
    pub exit_code: i32,
    pub out_dir: Option<PathBuf>,
    pub message: Option<String>,
}

/// Loads, validates and runs; writes artifacts and the manifest even when
/// a check fails. Configuration problems produce no artifacts.
pub fn run_file(config_path: &Path, overrides: Overrides) -> RunResult {
    match ExperimentConfig::load(config_path) {
        Ok(cfg) => run_config(cfg, overrides),
        Err(e) => RunResult {
            exit_code: e.exit_code(),
            out_dir: None,
            message: Some(e.to_string()),
        },
    }
}

pub fn run_config(mut cfg: ExperimentConfig, overrides: Overrides) -> RunResult {
    let fail = |e: CliError, out_dir: Option<PathBuf>| RunResult {
        exit_code: e.exit_code(),
        out_dir,
        message: Some(e.to_string()),
    };
    if overrides.command.is_some() {
        cfg.command = overrides.command;
    }
    if overrides.seed.is_some() {
        cfg.seed = overrides.seed;
    }
    if overrides.workers.is_some() {
        cfg.workers = overrides.workers;
    }
    if overrides.out.is_some() {
        cfg.out = overrides.out;
    }
    let Some(command) = cfg.command else {
        return fail(CliError::Config("missing field `command`".into()), None);
    };
    if let Err(e) = cfg.validate() {
        return fail(e, None);
    }
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(command.name()));
    let started = Instant::now();
    let outcome = match run_command(command, &cfg) {
        Ok(o) => o,
        Err(e) if e.exit_code() == EXIT_VIOLATION => Outcome::failed(command.name(), &e.to_string()),
        Err(e) => return fail(e, None),
    };
    let elapsed = started.elapsed().as_secs_f64();
    if let Err(e) = write_artifacts(&out_dir, &cfg, command, &outcome, elapsed) {
        return fail(e, Some(out_dir));
    }
    let failed: Vec<&str> = outcome
        .checks
        .iter()
        .filter(|c| !c.1)
        .map(|c| c.0.as_str())
        .collect();
    RunResult {
        exit_code: if failed.is_empty() { EXIT_PASS } else { EXIT_VIOLATION },
        message: (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", "))),
        out_dir: Some(out_dir),
    }
}
