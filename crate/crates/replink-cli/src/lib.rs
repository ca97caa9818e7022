//! Command layer of the repeater-link simulator: scenario ingestion, run
//! execution, and artifact emission.

pub mod commands;
pub mod manifest;
pub mod scenario;

use std::path::PathBuf;

use thiserror::Error;

/// Stable exit codes: 2 unreadable/invalid scenario, 3 physical-constraint
/// violation, 4 resume-hash mismatch, 5 no delivered pairs.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read scenario {0}: {1}")]
    Unreadable(PathBuf, String),
    #[error("invalid scenario {0}: {1}")]
    Schema(PathBuf, String),
    #[error("invalid override: {0}")]
    BadOverride(String),
    #[error("physical constraint violated: {0}")]
    Physics(#[from] replink_core::photonics::ConfigError),
    #[error("analysis failed: {0}")]
    Analysis(#[from] replink_core::analysis::AnalysisError),
    #[error("scenario has no sweep specification")]
    NoSweepSpec,
    #[error("existing sweep progress was produced by a different configuration (expected hash {expected}, found {found})")]
    ResumeMismatch { expected: String, found: String },
    #[error("no delivered pairs after {frames} frames ({heralds} heralds, {analyzed} accepted); increase frames or loosen the filter")]
    NoDeliveredPairs { frames: u64, heralds: u64, analyzed: u64 },
    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreadable(..)
            | CliError::Schema(..)
            | CliError::BadOverride(..)
            | CliError::NoSweepSpec => 2,
            CliError::Physics(..) => 3,
            CliError::ResumeMismatch { .. } => 4,
            CliError::NoDeliveredPairs { .. } => 5,
            CliError::Analysis(..) | CliError::Io(..) => 1,
        }
    }
}
