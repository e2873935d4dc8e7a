//! Sequential distributed spectrum sensing simulator.
//!
//! Local nodes run nonparametric sequential tests on energy samples and
//! report over a noisy multiple-access channel to a fusion center, which
//! runs its own sequential test. The crate provides the test kernels
//! (rank, t, random walk and their Huber-robustified variants), channel
//! and noise models including symmetric alpha-stable EMI, a Monte-Carlo
//! harness for error-probability vs detection-delay curves, and
//! closed-form performance bounds and approximations.

pub mod analysis;
pub mod channel;
pub mod config;
pub mod distributions;
pub mod montecarlo;
pub mod nodes;
pub mod report;
pub mod seqtests;

use thiserror::Error;

/// Errors surfaced by configuration validation and analytic operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
