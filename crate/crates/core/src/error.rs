use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("series is empty")]
    EmptySeries,

    #[error("series shorter than window ({len} < {window})")]
    SeriesTooShort { len: usize, window: usize },

    #[error("window length {got} is invalid (need at least {expected})")]
    WrongWindowLength { got: usize, expected: usize },

    #[error("window too short for approximate entropy: {len} values, need at least {min}")]
    WindowTooShort { len: usize, min: usize },

    #[error("non-finite input value at position {0}")]
    NonFiniteInput(usize),

    #[error("zero variance")]
    ZeroVariance,

    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    #[error("indicator column `{0}` has zero variance over the valid rows")]
    DegenerateColumn(&'static str),

    #[error("not enough valid rows: {got} < {min}")]
    NotEnoughRows { got: usize, min: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("requested dates {from}..={to} not covered by the indicator series")]
    DateRangeMismatch { from: NaiveDate, to: NaiveDate },

    #[error("date {date} outside segment [{t0}, {t1}]")]
    OutOfSegment {
        date: NaiveDate,
        t0: NaiveDate,
        t1: NaiveDate,
    },

    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),

    #[error("too few points for fit: {got} < {min}")]
    TooFewPoints { got: usize, min: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid breakpoints: {0}")]
    InvalidBreakpoints(String),

    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("score series is empty")]
    EmptyScore,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
