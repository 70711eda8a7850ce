use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Probability pushed past the Fock cutoff exceeded the truncation's tolerance.
    #[error("{operation}: truncation leak {leak:.3e} exceeds tolerance {tol:.3e}; increase n_max")]
    LeakGuard {
        operation: &'static str,
        leak: f64,
        tol: f64,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("truncation mismatch: {0}")]
    TruncationMismatch(String),

    /// A quantity is mathematically undefined at the requested point.
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("series truncated too early: {0}")]
    SeriesTruncation(String),

    #[error("integrator did not converge: {0}")]
    Integrator(String),

    #[error("fit did not converge after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("rank-deficient jacobian: {0}")]
    RankDeficient(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid_dimension",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::LeakGuard { .. } => "leak_guard",
            Error::InvalidState(_) => "invalid_state",
            Error::TruncationMismatch(_) => "truncation_mismatch",
            Error::Undefined(_) => "undefined",
            Error::SeriesTruncation(_) => "series_truncation",
            Error::Integrator(_) => "integrator",
            Error::NonConvergence { .. } => "non_convergence",
            Error::RankDeficient(_) => "rank_deficient",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Degenerate(_) => "degenerate",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
