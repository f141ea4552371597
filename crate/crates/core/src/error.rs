use thiserror::Error;

/// Errors raised by estimators, models and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alpha must lie strictly inside (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("empty sample batch")]
    EmptyBatch,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// The likelihood-ratio mass of an importance-sampled batch never reaches
    /// `alpha`, so the weighted quantile does not exist on that batch.
    #[error("weighted quantile undefined: normalized likelihood mass {mass} < alpha {alpha}")]
    QuantileUndefined { mass: f64, alpha: f64 },

    #[error("enumeration budget of {limit} trajectories exceeded")]
    BudgetExceeded { limit: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
