use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are coarse on purpose: the CLI maps each one onto an exit
/// code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A dense representation would exceed the desk-scale cap.
    #[error("capacity exceeded: {what} needs {needed} states, cap is {cap}")]
    Capacity {
        what: &'static str,
        needed: u128,
        cap: usize,
    },

    /// A stored model is internally inconsistent.
    #[error("model corruption: {0}")]
    ModelCorruption(String),

    /// Model file version not understood.
    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    /// Iterative solver stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (L1 residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// The chain has no unique stationary distribution.
    #[error("degenerate chain: {0}")]
    Degeneracy(String),

    /// Malformed input data.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code: 2 data/model, 3 capacity, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity { .. } => 3,
            Error::Convergence { .. } | Error::Degeneracy(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
