//! Sparse matrix-matrix multiplication over 8x8 bitmap tiles with a
//! binary16-input, binary32-accumulate tile kernel.

pub mod analytics;
pub mod cli;
pub mod error;
pub mod half;
pub mod kernels;
pub mod oracle;
pub mod pipeline;
pub mod tile_format;

pub use error::{Error, Result};
