use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input in {path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown location id `{0}`")]
    UnknownLocation(String),

    #[error("duplicate location id `{0}`")]
    DuplicateLocation(String),

    #[error("location `{id}` has invalid population {population} (must be >= 1)")]
    InvalidPopulation { id: String, population: f64 },

    #[error("location `{id}` has invalid coordinates ({latitude}, {longitude})")]
    InvalidCoordinates {
        id: String,
        latitude: f64,
        longitude: f64,
    },

    #[error("duplicate flow record for ordered pair {source_id} -> {destination}")]
    DuplicatePair {
        source_id: String,
        destination: String,
    },

    #[error("self-flow {0} -> {0} is not allowed")]
    SelfFlow(String),

    #[error("location `{0}` has no coordinates")]
    MissingCoordinates(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("posterior precision is not positive definite (condition number estimate {condition:.3e})")]
    NotPositiveDefinite { condition: f64 },

    #[error("chain {chain} failed at iteration {iteration}: {message}")]
    ChainFailure {
        chain: usize,
        iteration: usize,
        message: String,
    },

    #[error("covariate mismatch between prediction and replicate: {0}")]
    CovariateMismatch(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
