use thiserror::Error;

/// Errors produced by the merge tree pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {0}")]
    NonFiniteValue(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("nesting violation: branch {child} [{child_birth}, {child_death}] is not inside its parent {parent} [{parent_birth}, {parent_death}]")]
    NestingViolation {
        parent: usize,
        child: usize,
        parent_birth: f64,
        parent_death: f64,
        child_birth: f64,
        child_death: f64,
    },

    #[error("branch {0} has zero persistence but has children")]
    ZeroPersistenceParent(usize),

    #[error("tree has no branches")]
    EmptyTree,

    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),

    #[error("matching does not fit the trees: {0}")]
    MatchingMismatch(String),

    #[error("invalid weights: {0}")]
    WeightError(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),

    #[error("invalid cluster count k={k} for {n} members")]
    InvalidK { k: usize, n: usize },

    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("invalid key frames: {0}")]
    InvalidKeyFrames(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
