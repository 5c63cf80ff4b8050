use thiserror::Error;

/// Errors raised anywhere in the optimizer, environment or harness.
#[derive(Debug, Error)]
pub enum BcoError {
    #[error("point outside the strict interior (constraint slack {slack:e})")]
    DomainViolation { slack: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    Conditioning { min_eigenvalue: f64 },

    #[error("root is not bracketed: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    Bracketing { f_lo: f64, f_hi: f64 },

    #[error("solver failed: {reason} (last decrements: {decrements:?})")]
    Solver {
        reason: String,
        decrements: Vec<f64>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("feedback order violated: {0}")]
    FeedbackOrder(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BcoError>;

impl BcoError {
    pub(crate) fn solver(reason: impl Into<String>, decrements: &[f64]) -> Self {
        let tail = decrements.len().saturating_sub(8);
        BcoError::Solver {
            reason: reason.into(),
            decrements: decrements[tail..].to_vec(),
        }
    }
}
