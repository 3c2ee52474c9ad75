use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarfeError>;

#[derive(Debug, Error)]
pub enum HarfeError {
    #[error("invalid order q={q} for input dimension d={d} (need 1 <= q <= d)")]
    InvalidOrder { q: usize, d: usize },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid sparsity s={s} for N={n} (need 1 <= s <= N)")]
    InvalidSparsity { s: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("ill-conditioned restricted solve (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("model has no nonzero coefficients")]
    EmptyModel,

    #[error("zero-norm reference vector")]
    ZeroNorm,

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("enumeration budget exceeded: C({n},{s}) = {subsets} subsets > budget {budget}")]
    BudgetExceeded {
        n: usize,
        s: usize,
        subsets: u128,
        budget: u128,
    },

    #[error("trace too short: {len} entries, need at least {needed}")]
    TraceTooShort { len: usize, needed: usize },

    // messages embed the underlying error, so it is not also exposed as
    // a source (which would print it twice in error chains)
    #[error("{path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Toml(toml::de::Error),
}

impl From<toml::de::Error> for HarfeError {
    fn from(e: toml::de::Error) -> Self {
        HarfeError::Toml(e)
    }
}

impl HarfeError {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        HarfeError::Io {
            path: path.into(),
            cause,
        }
    }
}
