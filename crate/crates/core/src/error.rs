use std::path::PathBuf;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an input contract (dimension mismatch, label outside its domain, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure in {routine}: {detail}")]
    Numeric { routine: &'static str, detail: String },

    /// Σ̂ is not strictly positive definite, so no ellipsoid exists.
    #[error(
        "degenerate covariance: smallest eigenvalue {smallest_eigenvalue:e} \
         (threshold {threshold:e}); check linear independence of the functional \
         derivatives with the Psi rank test"
    )]
    DegenerateCovariance { smallest_eigenvalue: f64, threshold: f64 },

    #[error(
        "solver did not converge after {iterations} iterations \
         (gradient norm {grad_norm:e}, objective {objective})"
    )]
    SolverFailure { iterations: usize, grad_norm: f64, objective: f64 },

    #[error("domain: {0}")]
    Domain(String),

    #[error("cross-validation fold {fold} (lambda = {lambda}) failed: {source}")]
    Fold {
        fold: usize,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
