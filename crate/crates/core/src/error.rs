//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by ingestion, training and evaluation.
#[derive(Debug, Error)]
pub enum DhprepError {
    /// A line of an edge-list file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An input violated a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Negative sampling could not find a valid vertex within the attempt bound.
    #[error("negative sampling exhausted for vertex {vertex} at snapshot {snapshot} after {attempts} attempts (snapshot is near-complete)")]
    SamplingExhausted {
        vertex: usize,
        snapshot: usize,
        attempts: usize,
    },

    /// Training produced a non-finite loss.
    #[error("divergence at epoch {epoch}, batch {batch}: {term} = {value}")]
    Divergence {
        epoch: usize,
        batch: usize,
        term: &'static str,
        value: f64,
    },

    /// A checkpoint file was missing, truncated or from an incompatible version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DhprepError>;
