use thiserror::Error;

/// Errors raised by the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("volatility matrix is singular or too ill-conditioned (condition number {condition:e})")]
    SingularVolatility { condition: f64 },

    #[error("volatility is degenerate: min eigenvalue of sigma sigma^T is {min_eigenvalue:e}, below {kappa0:e}")]
    Degenerate { min_eigenvalue: f64, kappa0: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside the domain: {0}")]
    DomainError(String),

    #[error("parameter out of supported range: {0}")]
    ParameterOutOfRange(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    #[error("root bracketing failed: {0}")]
    BracketFailure(String),

    #[error("numerical fault: {0}")]
    NumericalFault(String),

    #[error("Assumption 1 violated: delta must exceed max(zeta(alpha(1-gamma)), 0); margin {margin:e}")]
    AssumptionViolated { margin: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn no_convergence(what: impl Into<String>, iterations: usize) -> Self {
        Error::NonConvergence { what: what.into(), iterations }
    }
}
