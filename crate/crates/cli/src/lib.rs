//! Batch runner: scenario simulation, estimator runs, cross-run comparison
//! and trajectory export. `main.rs` is a thin clap front end over this.

pub mod commands;
pub mod config;
pub mod formats;

use pcsrif_core::sim::SimError;
use thiserror::Error;

pub use commands::{compare, export, rerun, run, simulate, CompareReport, RunSummary};
pub use config::{Manifest, RunConfig, ScenarioSource};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Scenario(#[from] SimError),
    #[error("scenario hash mismatch: {a} has {hash_a}, {b} has {hash_b}")]
    ScenarioMismatch {
        a: String,
        hash_a: String,
        b: String,
        hash_b: String,
    },
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Exit code of a run in which the estimator aborted.
pub const EXIT_ABORTED: i32 = 3;
