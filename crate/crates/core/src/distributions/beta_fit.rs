//! Inversion of reported binomial confidence intervals.
//!
//! Seroprevalence studies publish adjusted infection-rate estimates with a
//! 95% CI rather than usable raw counts. Fitting a Beta(alpha, beta) whose
//! 2.5% and 97.5% quantiles match the reported interval, then reading the
//! shape parameters as pseudo-counts, recovers effective data values
//! `CC = round(alpha)` and `T = round(alpha) + round(beta) + 1`.

use crate::error::{Error, Result};
use crate::optimize::nelder_mead;
use crate::special::beta_inc_inv;

/// A beta distribution fitted to a reported central interval.
#[derive(Debug, Clone, Copy)]
pub struct IntervalFit {
    /// Reported lower endpoint.
    pub lower: f64,
    /// Reported upper endpoint.
    pub upper: f64,
    /// Central probability mass of the interval (0.95 here).
    pub prob_mass: f64,
    /// Fitted beta shape alpha.
    pub alpha: f64,
    /// Fitted beta shape beta.
    pub beta: f64,
}

fn validate(lower: f64, upper: f64) -> Result<()> {
    if !(lower > 0.0 && upper < 1.0 && lower < upper) {
        return Err(Error::InvalidParameter(format!(
            "interval endpoints must satisfy 0 < lower < upper < 1, got ({lower}, {upper})"
        )));
    }
    Ok(())
}

/// Fit (alpha, beta) so the Beta 2.5%/97.5% quantiles match `(lower, upper)`.
///
/// Minimizes the summed squared quantile error with Nelder-Mead on the log
/// of the shape parameters, starting from a normal-approximation moment
/// match. Errors if the residual quantile error stays above 1e-4.
pub fn fit_beta_to_interval(lower: f64, upper: f64) -> Result<IntervalFit> {
    const PROB_MASS: f64 = 0.95;
    validate(lower, upper)?;
    let p_lo = 0.5 * (1.0 - PROB_MASS);
    let p_hi = 1.0 - p_lo;
    let z = 1.959_963_984_540_054; // N(0,1) 97.5% quantile

    // Moment match: mean at the midpoint, sd from the interval width.
    let mean = 0.5 * (lower + upper);
    let sd = (upper - lower) / (2.0 * z);
    let total = (mean * (1.0 - mean) / (sd * sd) - 1.0).max(2.0);
    let start = [(mean * total).ln(), ((1.0 - mean) * total).ln()];

    let objective = |log_ab: &[f64]| {
        let a = log_ab[0].exp();
        let b = log_ab[1].exp();
        let q_lo = beta_inc_inv(a, b, p_lo);
        let q_hi = beta_inc_inv(a, b, p_hi);
        (q_lo - lower).powi(2) + (q_hi - upper).powi(2)
    };
    let fit = nelder_mead(objective, &start, 0.05, 1e-30, 2000);

    let alpha = fit.x[0].exp();
    let beta = fit.x[1].exp();
    let residual = fit.value.sqrt();
    if residual > 1e-4 {
        return Err(Error::NonConvergence { residual });
    }
    Ok(IntervalFit {
        lower,
        upper,
        prob_mass: PROB_MASS,
        alpha,
        beta,
    })
}

/// Effective binomial counts reproducing a reported 95% CI.
///
/// Returns `(confirmed, tests)` with `confirmed = round(alpha)` and
/// `tests = round(alpha) + round(beta) + 1`.
pub fn invert_binomial_ci(lower: f64, upper: f64) -> Result<(u64, u64)> {
    let fit = fit_beta_to_interval(lower, upper)?;
    let cc = fit.alpha.round() as u64;
    let t = cc + fit.beta.round() as u64 + 1;
    Ok((cc, t))
}
