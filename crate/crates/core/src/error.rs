use thiserror::Error;

use crate::multiindex::MultiIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("weight overflow for multi-index {0}")]
    WeightOverflow(MultiIndex),

    #[error("truncation with {count} members exceeds the cap of {cap}")]
    TruncationTooLarge { count: u128, cap: usize },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("coefficient {missing} is required before {requested} can be formed")]
    Sequencing {
        requested: MultiIndex,
        missing: MultiIndex,
    },

    #[error("solve for coefficient {gamma} failed: {source}")]
    Coefficient {
        gamma: MultiIndex,
        #[source]
        source: Box<Error>,
    },

    #[error("run at eps = {eps} failed: {source}")]
    Epsilon {
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
