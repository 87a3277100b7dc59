use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Rows count data records from 1, here and below.
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("row {row}: response must be a nonnegative integer (got `{value}`)")]
    InvalidResponse { row: usize, value: String },

    #[error("row {row}, column `{column}`: unknown level `{level}`")]
    UnknownLevel {
        row: usize,
        column: String,
        level: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("design matrix `{matrix}` is rank deficient: column `{column}` is collinear with [{}]", .collinear_with.join(", "))]
    RankDeficient {
        matrix: String,
        column: String,
        collinear_with: Vec<String>,
    },

    #[error("inflated value {0} never occurs among the positive responses")]
    InflatedValueAbsent(u64),

    #[error("no positive responses in the data")]
    NoPositives,

    #[error("model configuration: {0}")]
    Config(String),

    #[error("covariance matrix unavailable")]
    CovarianceUnavailable,

    #[error("simulation: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
