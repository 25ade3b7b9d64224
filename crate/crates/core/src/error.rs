use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("matrix of {rows}x{cols} needs {expected} values, got {actual}")]
    ValueCount {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },

    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("non-finite value {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("invalid N:M pattern {n}:{m}: {reason}")]
    InvalidPattern {
        n: usize,
        m: usize,
        reason: &'static str,
    },

    #[error("{dimension} = {size} is not divisible by M = {m}")]
    Divisibility {
        dimension: &'static str,
        size: usize,
        m: usize,
    },

    #[error("top-{n} requested from a block of {len} values")]
    RankOutOfRange { n: usize, len: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("gradient-magnitude criterion needs a weight gradient matrix")]
    MissingGradient,

    #[error("{what} is infeasible: {note}")]
    Infeasible { what: &'static str, note: String },

    #[error("backward mask is stale: built for a different permutation than the layer holds")]
    StaleBackwardMask,

    #[error("wrong strategy: {0}")]
    Strategy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("IDX magic mismatch in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("IDX file {path} truncated: expected {expected} bytes, found {actual}")]
    IdxTruncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("IDX count mismatch: {images} images but {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("training diverged: non-finite loss at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
