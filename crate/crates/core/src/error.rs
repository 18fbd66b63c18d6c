//! Unified error type for the crate.
//!
//! Every variant carries enough coordinates to locate the problem and maps
//! to a stable machine-readable class via [`Error::code`], which the CLI
//! prints as `error[Class]: ...` on a single line.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: expected {expected} fields, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: cell `{value}` is not a finite number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: follow-up time {value} is negative")]
    NegativeTime { row: usize, value: f64 },
    #[error("row {row}: status `{value}` is not 0 or 1")]
    StatusNotBinary { row: usize, value: String },
    #[error("row {row}, column `{column}`: binary covariate holds {value}, expected 0 or 1")]
    NonBinaryCell {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("header does not match schema: {detail}")]
    HeaderMismatch { detail: String },
    #[error("model spec references unknown column `{name}`")]
    SpecColumnUnknown { name: String },
    #[error("duplicate column `{name}` in model spec")]
    SpecColumnDuplicate { name: String },
    #[error("{count} missing cells present on model columns; imputation or --allow-complete-case required")]
    MissingDataPresent { count: usize },

    #[error("logistic fit diverged: complete or quasi-complete separation suspected")]
    Separation,
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("no events with positive weight")]
    NoEvents,
    #[error("Cox partial likelihood is monotone in a coefficient; estimate diverges")]
    Monotone,

    #[error("Metropolis-Hastings acceptance rate {rate:.4} below 1% during burn-in; proposal scale is mis-set")]
    ZeroAcceptance { rate: f64 },
    #[error("too many failures: {failed} of {total} attempts did not converge")]
    TooManyFailures { failed: usize, total: usize },
    #[error("initialization failed: {detail}")]
    InitFailure { detail: String },
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },
    #[error("unknown scenario `{name}` (expected A-F)")]
    UnknownScenario { name: String },
    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("toml error: {0}")]
    Toml(String),
}

impl Error {
    /// Stable machine-parsable class name for CLI exit lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "MalformedRow",
            Error::NonNumericCell { .. } => "NonNumericCell",
            Error::NegativeTime { .. } => "NegativeTime",
            Error::StatusNotBinary { .. } => "StatusNotBinary",
            Error::NonBinaryCell { .. } => "NonBinaryCell",
            Error::HeaderMismatch { .. } => "HeaderMismatch",
            Error::SpecColumnUnknown { .. } => "SpecColumnUnknown",
            Error::SpecColumnDuplicate { .. } => "SpecColumnDuplicate",
            Error::MissingDataPresent { .. } => "MissingDataPresent",
            Error::Separation => "Separation",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::NoEvents => "NoEvents",
            Error::Monotone => "Monotone",
            Error::ZeroAcceptance { .. } => "ZeroAcceptance",
            Error::TooManyFailures { .. } => "TooManyFailures",
            Error::InitFailure { .. } => "InitFailure",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::UnknownScenario { .. } => "UnknownScenario",
            Error::InvalidConfig { .. } => "InvalidConfig",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Toml(_) => "Toml",
        }
    }
}
