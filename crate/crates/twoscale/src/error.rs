use thiserror::Error;

/// Errors shared by all solver and assembly stages.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or non-finite problem data. The message names the offending
    /// sample point where possible.
    #[error("data error: {0}")]
    Data(String),

    /// An iterative solve exceeded its iteration cap.
    #[error("convergence failure in {context}: residual {residual:.3e} after {iterations} iterations")]
    Convergence {
        context: String,
        residual: f64,
        iterations: usize,
    },

    /// A time-stepping run produced non-finite state.
    #[error("blowup at step {step}: non-finite state")]
    Blowup { step: usize },

    /// Not enough usable samples for a statistical estimate.
    #[error("estimation error: need at least {needed} points, got {got}")]
    Estimation { needed: usize, got: usize },

    /// Malformed configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
