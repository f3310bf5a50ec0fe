//! Experiment runner for compressed gradient tracking.
//!
//! Configs are TOML files ([`config`]); named bundles on the standard ridge
//! regression instance live in [`presets`]. [`experiment::run_experiment`]
//! writes a CSV trace per run, [`experiment::compare`] merges several runs
//! on the same problem, [`certify`] builds certificate reports and
//! [`verify`] runs the invariant batteries.

pub mod certify;
pub mod config;
pub mod experiment;
pub mod presets;
pub mod trace;
pub mod verify;

use std::path::PathBuf;

use cgt_core::algorithms::RunResult;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{compare, run_experiment, simulate, Summary};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CGT_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("diverged at iteration {k}: residual {residual:e}{}", .trace_path.as_ref().map(|p| format!("; partial trace in {}", p.display())).unwrap_or_default())]
    Diverged {
        k: u64,
        residual: f64,
        partial: Box<RunResult>,
        trace_path: Option<PathBuf>,
    },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status: 1 for config and I/O errors, 2 for divergence,
    /// 3 for failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 1,
            HarnessError::Diverged { .. } => 2,
            HarnessError::Verification(_) => 3,
        }
    }
}

/// The output directory from [`OUTPUT_DIR_ENV`], else `out`.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}
