use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("graph is not ancestral")]
    NotAncestral,

    #[error("graph is not maximal: nodes {0} and {1} are non-adjacent but inseparable")]
    NotMaximal(usize, usize),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("too few samples: n = {n}, need more than {required}")]
    TooFewSamples { n: usize, required: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("optimizer diverged: {0}")]
    Diverged(String),

    #[error("schema mismatch: model has version {model}, extractor has {extractor}")]
    SchemaMismatch { model: u32, extractor: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
