//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong while building models, running
/// interventions, or training alignments.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Class index outside the logit vector.
    #[error("label error: target {target} out of range for {classes} classes")]
    Label { target: usize, classes: usize },

    /// Linear solve failed because the system is numerically singular.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// Input setting lacks a required input variable.
    #[error("incomplete input: missing variable `{0}`")]
    IncompleteInput(String),

    /// Malformed causal model or intervention specification.
    #[error("spec error: {0}")]
    Spec(String),

    /// Unknown hypothesis name.
    #[error("unknown hypothesis `{0}`")]
    Hypothesis(String),

    /// Requested network width cannot hold the planted blocks.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Activation site outside the network.
    #[error("site error: {0}")]
    Site(String),

    /// Intervention masks are not a binary partition.
    #[error("partition error: {0}")]
    Partition(String),

    /// Number of sources does not match the number of intervened slots.
    #[error("arity error: expected {expected} sources, got {got}")]
    Arity { expected: usize, got: usize },

    /// Training loss became non-finite.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// IIA evaluation could not run.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Report inputs are inconsistent.
    #[error("report error: {0}")]
    Report(String),

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Token sequence does not decode to a task instance.
    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
