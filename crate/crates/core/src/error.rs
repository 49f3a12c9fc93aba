use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A value lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative optimizer stopped without reaching its tolerance.
    #[error("optimizer did not converge: final residual {residual:.3e}")]
    NonConvergence { residual: f64 },

    /// MCMC failed the convergence diagnostic even after all restarts.
    #[error("MCMC did not converge: max R-hat {rhat:.4} after {restarts} restart(s)")]
    McmcNonConvergence { rhat: f64, restarts: u32 },

    /// Not enough draws for the requested summary.
    #[error("insufficient draws: need at least {need}, have {have}")]
    InsufficientDraws { need: usize, have: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
