use std::path::PathBuf;

use thiserror::Error;

use crate::validate::ValidationReport;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown phase `{0}`")]
    UnknownPhase(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("empty phase `{0}`")]
    EmptyPhase(String),

    #[error("no weekday overlap between baseline and experiment phases")]
    NoWeekdayOverlap,

    #[error("rank-deficient design: column `{column}` is collinear with {with:?}")]
    RankDeficient { column: String, with: Vec<String> },

    #[error("non-finite input at epoch {0}")]
    NonFinite(usize),

    #[error("dataset failed validation ({} violations)", .0.total_violations())]
    Invalid(Box<ValidationReport>),

    #[error("{path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest: {0}")]
    Manifest(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
