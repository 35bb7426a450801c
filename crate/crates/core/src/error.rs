use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid panel: {0}")]
    Panel(String),

    #[error("cholesky breakdown at pivot {pivot} (value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("non-finite sampler state at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },

    #[error("adaptation diverged at iteration {iteration}: {what} = {value:e}")]
    AdaptationDiverged {
        iteration: usize,
        what: String,
        value: f64,
    },

    #[error("all particle weights vanished at step {step}")]
    WeightCollapse { step: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
