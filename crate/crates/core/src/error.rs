use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("value {value} is outside the finite {target} range")]
    Overflow { value: f64, target: &'static str },

    #[error("non-finite value {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite accumulator in output tile ({tile_row}, {tile_col})")]
    Precision { tile_row: u32, tile_col: u32 },

    #[error("malformed tiled file: {0}")]
    Format(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Unsupported(_) => 2,
            Error::Overflow { .. } => 3,
            Error::Dimension(_) => 4,
            Error::Precision { .. } => 5,
            _ => 1,
        }
    }
}
