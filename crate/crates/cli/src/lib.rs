//! Experiment runner and verification harness for `nashpl`.
//!
//! Configurations are flat `key = value` files. `run` writes one CSV trace
//! per (variant, seed) plus a JSON summary, `verify` drives the diagnostics
//! battery, and `gradcheck` compares analytic gradients with central
//! differences.

pub mod config;
pub mod gradcheck;
pub mod output;
pub mod run;
pub mod verify;

use thiserror::Error;

pub use config::{ExperimentConfig, ProblemConfig, SolverSettings};
pub use gradcheck::{cmd_gradcheck, gradcheck_problem, GradcheckReport};
pub use run::{cmd_run, start_point, RunReport, RunSummary};
pub use verify::{cmd_verify, VerifyReport, SCOPES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

/// Violations are not errors: the commands return reports and the binary
/// maps a failed report to [`EXIT_VIOLATION`].
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Unknown(String),
    #[error(transparent)]
    Core(#[from] nashpl::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(nashpl::Error::InvalidParameter(_)) => EXIT_CONFIG,
            HarnessError::Unknown(_) | HarnessError::Core(nashpl::Error::UnknownProblem(_)) => EXIT_UNKNOWN,
            _ => 1,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
