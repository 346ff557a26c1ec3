use thiserror::Error;

/// Errors produced by configuration validation and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or mismatched dimensions.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The AMP recursion produced non-finite values.
    #[error("AMP diverged: non-finite value at iteration {iteration}")]
    AmpDiverged { iteration: usize },

    /// A truncated distribution could not reach the requested tail mass
    /// within the hard cap on its support.
    #[error("truncation cap reached: tail mass {achieved:.3e} above requested {requested:.3e}")]
    Truncation { achieved: f64, requested: f64 },

    /// Power iteration failed to reach the requested tolerance.
    #[error("power iteration did not converge after {iterations} iterations (last delta {last_delta:.3e})")]
    NoConvergence { iterations: usize, last_delta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
