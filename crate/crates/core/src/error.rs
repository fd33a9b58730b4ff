use thiserror::Error;

/// Everything that can go wrong across the solver and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("init: {0}")]
    Init(String),

    /// Field left the representable range (NaN/Inf or runaway norm).
    #[error("numerical blowup at step {step} (t = {t:.6}): {what}")]
    Blowup { step: u64, t: f64, what: String },

    #[error("consistency violation at step {step} (t = {t:.6}): {what}")]
    Consistency { step: u64, t: f64, what: String },

    /// A quantity left the domain of a downstream formula (log of a
    /// non-positive purity, non-positive-definite covariance, ...).
    #[error("domain: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Series passed to a joint analysis do not share a time base or grid.
    #[error("alignment: {0}")]
    Alignment(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
