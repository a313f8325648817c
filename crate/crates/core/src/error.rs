use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model {model} is rank deficient: rank {rank} < size {size}")]
    RankDeficient { model: String, rank: usize, size: usize },

    #[error("enumeration budget exceeded: {required} subsets needed, cap is {cap} (reduce t or p)")]
    BudgetExceeded { required: u128, cap: u128 },

    #[error("configuration not supported: {0}")]
    Unsupported(String),

    #[error("ground truth is required but the instance carries none")]
    MissingGroundTruth,

    #[error("singular matrix: {0}")]
    Singular(String),

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

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
