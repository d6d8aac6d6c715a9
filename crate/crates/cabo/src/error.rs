use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum CaboError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(
        "Cholesky factorization failed after jitter escalation to {max_jitter:e} \
         (condition estimate {condition:.3e})"
    )]
    CholeskyFailure { max_jitter: f64, condition: f64 },

    #[error("hyperparameter fit failed: {0}")]
    FitFailure(String),

    #[error("grid of {got} points exceeds the dense-factorization limit of {limit}")]
    GridTooLarge { got: usize, limit: usize },

    #[error("bracket growth failed after {doublings} doublings; inputs are likely non-finite")]
    BracketFailure { doublings: usize },

    #[error("csv parse error at {path}:{row}: {message}")]
    CsvParse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("csv schema error in {path}: {message}")]
    CsvSchema { path: String, message: String },

    #[error("pandora instance invalid: {0}")]
    PandoraInstance(String),

    #[error("pandora state space too large: {states} states exceeds limit {limit}")]
    PandoraTooLarge { states: u64, limit: u64 },

    #[error("budget {budget} does not cover the initial cost {initial_cost}")]
    BudgetTooSmall { budget: f64, initial_cost: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CaboError>;
