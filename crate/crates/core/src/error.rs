use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: unknown label {label:?}")]
    UnknownLabel { row: usize, label: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid projection: {0}")]
    Projection(String),

    #[error("projection is not invertible: {0}")]
    NotInvertible(String),

    #[error("class {class:?} has {count} cases, fewer than {folds} folds")]
    TooFewCases {
        class: String,
        count: usize,
        folds: usize,
    },

    #[error("invalid split plan: {0}")]
    Split(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("unknown rule id {0}")]
    UnknownRule(usize),

    #[error("invalid hierarchy: {0}")]
    Hierarchy(String),

    #[error("invalid linear model: {0}")]
    Linear(String),

    #[error("no line reaches recall floor {floor:.3}; best recall {best_recall:.3}")]
    RecallFloor {
        floor: f64,
        best_recall: f64,
        best: Box<crate::linear::FittedLinear>,
    },

    #[error("weighted precision undefined: no included rule classified any case")]
    NoClassifiedCases,

    #[error("cannot express as tree conditions: {0}")]
    TreeForm(String),

    #[error("session: {0}")]
    Session(String),

    #[error("stale session digest: expected {expected}, got {actual}")]
    StaleDigest { expected: String, actual: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
