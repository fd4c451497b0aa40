use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: field `{field}`: {reason}")]
    Record {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("line {line}: duplicate user_id `{user_id}`")]
    DuplicateUser { line: usize, user_id: String },

    #[error("user `{0}` is in the target group but has no anchor_date")]
    MissingAnchor(String),

    #[error("cannot build a word graph from an empty document list")]
    EmptyCohort,

    #[error("graph is empty")]
    EmptyGraph,

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{which} word set is empty after thresholding; relax the threshold")]
    EmptyWordSet { which: &'static str },

    #[error("no pattern reached min_count={min_count}; lower min_count or supply more text")]
    NoPatterns { min_count: u64 },

    #[error("group has no trigrams")]
    NoTrigrams,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("training data has a single class")]
    SingleClass,

    #[error("feature value at row {row}, column {col} is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("class `{class}` has {size} members, fewer than {folds} folds")]
    ClassTooSmall {
        class: &'static str,
        size: usize,
        folds: usize,
    },

    #[error("undefined ratio: control group has no first-person tokens")]
    UndefinedRatio,

    #[error("{0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
