use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("series length {len} is not divisible by the daily period {period}")]
    NotDivisible { len: usize, period: usize },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("{context} must be positive, got {value}")]
    NotPositive { context: String, value: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("storage device constraints are infeasible: {0}")]
    InfeasibleDevice(String),

    #[error(
        "temperature {tau_out} °C at index {index} is outside the valid range \
         [{lo} °C, {hi} °C] of the temperature-load function"
    )]
    TemperatureOutOfRange {
        tau_out: f64,
        index: usize,
        lo: f64,
        hi: f64,
    },

    #[error("need at least {needed} full days of data, got {got}")]
    TooFewDays { needed: usize, got: usize },

    #[error("window of {train} train + {test} test days does not fit in {available} days")]
    InsufficientDays {
        train: usize,
        test: usize,
        available: usize,
    },

    #[error("{path}: parse error at row {row}, column {column}: {message}")]
    CsvParse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: timestamps misaligned, first offending timestamp {timestamp}")]
    Misaligned { path: PathBuf, timestamp: String },

    #[error("{path}: gap in hourly timestamps, expected {expected} after {previous}")]
    TimestampGap {
        path: PathBuf,
        expected: String,
        previous: String,
    },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("NRMSE denominator is zero: max |actual| = 0")]
    ZeroDenominator,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
