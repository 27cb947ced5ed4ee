//! Crate-wide error type.

use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed network input (self-loops, non-binary entries, ragged rows).
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    /// A distribution was asked to sample or evaluate outside its parameter space.
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),

    /// Left-truncated gamma whose retained mass is too small to sample from.
    #[error("truncated gamma mass {mass:e} below t = {truncation} is numerically zero (shape {shape}, rate {rate})")]
    TruncationMassUnderflow {
        shape: f64,
        rate: f64,
        truncation: f64,
        mass: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A trace file line that does not match the record schema.
    #[error("{path}: line {line}: {message}")]
    TraceSchema {
        path: String,
        line: usize,
        message: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}
