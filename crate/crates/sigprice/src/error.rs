//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by path construction, simulation, calibration and I/O.
///
/// Pure tensor-algebra operations treat shape mismatches as programming
/// errors and panic instead (see the `tensor` module docs).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor data: {0}")]
    InvalidTensor(String),

    #[error("invalid price path: {0}")]
    InvalidPath(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Command-line usage or configuration-file problems. Message carries
    /// the full description; the CLI adds the `[config]` stage tag.
    #[error("{0}")]
    Config(String),

    #[error("invalid payoff or family: {0}")]
    InvalidFamily(String),

    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("pricing failed: {0}")]
    Pricing(String),

    /// An experiment report is malformed or internally inconsistent.
    #[error("invalid report: {0}")]
    Report(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    /// An experiment stage failed; carries the stage tag for diagnostics.
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Tags an error with the experiment stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The stage tag, if this error was tagged.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
