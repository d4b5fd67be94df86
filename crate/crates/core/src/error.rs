use thiserror::Error;

/// Errors surfaced by construction, validation, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` is invalid: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),

    #[error("matrix is not symmetric: |W[{i}][{j}] - W[{j}][{i}]| = {dev:e}")]
    NotSymmetric { i: usize, j: usize, dev: f64 },

    #[error("mixing matrix has no positive spectral gap (network not connected)")]
    NotConnected,

    #[error("topology is degenerate (omega_bar = 0); step-size formulas divide by omega_bar")]
    DegenerateTopology,

    #[error("agent {agent} has an empty local dataset")]
    EmptyShard { agent: usize },

    #[error("cannot measure contraction of the zero vector")]
    ZeroVector,

    #[error("state became non-finite at iteration {iter} in {field} of agent {agent}")]
    NonFinite {
        iter: u64,
        agent: usize,
        field: &'static str,
    },

    #[error("cannot parse `{input}` as {what}: {reason}")]
    Parse {
        input: String,
        what: &'static str,
        reason: String,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
