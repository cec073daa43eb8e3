use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("projection matrix columns are not orthonormal (||W^T W - I||_F = {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("zero-variance dimension {dim}")]
    ZeroVariance { dim: usize },

    #[error("rank-deficient matrix: |R[{col},{col}]| = {value:e}")]
    RankDeficient { col: usize, value: f64 },

    #[error("source and target models do not share the same projection and bandwidth")]
    ModelMismatch,

    #[error("sample set is unlabeled: {0}")]
    Unlabeled(&'static str),

    #[error("non-finite function value at probe ({row}, {col})")]
    NonFiniteProbe { row: usize, col: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

impl Error {
    pub(crate) fn mismatch(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    /// True for errors caused by bad user input (files, shapes, flags) rather
    /// than by a numerical failure during a computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::DimensionMismatch { .. }
            | Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::NotOrthonormal { .. }
            | Error::Unlabeled(_)
            | Error::Io { .. }
            | Error::Parse { .. } => true,
            Error::AtIteration { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
