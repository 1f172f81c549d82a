use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid range: lo = {lo} > hi = {hi}")]
    Range { lo: f64, hi: f64 },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown name `{0}`")]
    Lookup(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss = {loss})")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("sine-match search exhausted its budget of {budget} evaluations (best max error {best_eps:e} vs tolerance {eps:e})")]
    SearchExhausted {
        budget: u64,
        best_eps: f64,
        eps: f64,
    },

    #[error("construction failed: {0}")]
    Construction(String),
}

pub type Result<T> = std::result::Result<T, Error>;
