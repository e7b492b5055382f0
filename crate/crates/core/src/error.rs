use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ill-conditioned system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Closed-loop or iteration matrix is not Schur stable.
    #[error("unstable matrix: spectral radius {radius:.6} >= 1")]
    Unstable { radius: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("induced chain is not ergodic: power iteration did not settle after {iterations} steps")]
    Reducible { iterations: usize },

    #[error("Riccati iteration diverged; instance is not stabilizable")]
    NotStabilizable,
}
