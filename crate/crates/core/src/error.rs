use thiserror::Error;

/// Errors produced by the mapping library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("a cell must contain at least one measurement")]
    EmptyCell,

    #[error("measurement batch is empty")]
    EmptyBatch,

    #[error("unknown measurement id {0}")]
    UnknownMeasurement(usize),

    #[error("unknown cell key {0}")]
    UnknownCell(usize),

    #[error("invalid move: {0}")]
    InvalidMove(String),

    #[error("degenerate cell geometry: {0}")]
    DegenerateGeometry(String),

    #[error("refusing to enumerate partitions of {n} measurements (cap is {cap})")]
    TooManyMeasurements { n: usize, cap: usize },

    #[error("every transition candidate has zero weight")]
    NoFeasibleCandidate,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
