use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("non-finite value at tape node {node}")]
    NonFiniteNode { node: usize },

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unseen level {level} for {variable}")]
    UnseenLevel { variable: String, level: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pole of {function} at x = {x}")]
    Pole { function: &'static str, x: f64 },

    #[error("input {name} = {value} outside domain [{lower}, {upper}]")]
    Domain {
        name: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("Cholesky factorization failed on every start; increase the nugget lower bound")]
    IncreaseNugget,

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("{0}")]
    Unsupported(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure is numerical (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NonFiniteNode { .. }
                | Error::NonFinite { .. }
                | Error::Pole { .. }
                | Error::IncreaseNugget
                | Error::Diverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
