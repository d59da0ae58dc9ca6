use thiserror::Error;

use crate::model::StageBreakdown;

/// Errors surfaced by protocols, oracles and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mean entry {value} at coordinate {index} is outside [-1, 1]")]
    MeanOutOfRange { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coordinate index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("{count} coordinates exceed the {bits}-bit message budget")]
    BudgetExceeded { count: usize, bits: usize },

    #[error("need at least {required} users, only {available} available")]
    InsufficientUsers { required: u64, available: u64 },

    #[error("user budget exhausted after {consumed} users ({stages:?})")]
    BudgetExhausted { consumed: u64, stages: StageBreakdown },

    #[error("expected {expected} messages, got {actual}")]
    MessageCount { expected: usize, actual: usize },

    #[error("domain of 2^{dim} inputs is too large to enumerate (limit 2^{limit})")]
    DomainTooLarge { dim: usize, limit: usize },

    #[error("recovery certificate violated: |x_hat - x| = {x_err}, bound {bound}")]
    CertificateViolated { x_err: f64, bound: f64 },

    #[error("search range exhausted at n = {max_n} without reaching the target success rate")]
    SearchExhausted { max_n: u64 },

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
