use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("data length {len} does not match shape {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, len: usize },

    #[error("malformed sparse matrix: {0}")]
    MalformedSparse(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("missing rate {mr} is not achievable with the {pattern} pattern (allowed {allowed})")]
    UnsatisfiableMissingRate {
        pattern: &'static str,
        mr: f64,
        allowed: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} components requested but only {1} rows available")]
    TooManyComponents(usize, usize),

    #[error("no masked entries to evaluate")]
    EmptyMask,

    #[error("no observed entries anywhere in the feature matrix")]
    NoObservedEntries,

    #[error("empty index set for {0}")]
    EmptyIndex(&'static str),

    #[error("train and validation splits overlap at node {0}")]
    SplitOverlap(usize),

    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{file}: declared {what} = {declared}, parsed {parsed}")]
    CountMismatch {
        file: PathBuf,
        what: &'static str,
        declared: usize,
        parsed: usize,
    },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    ) -> Self {
        Error::DimensionMismatch {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }
}
