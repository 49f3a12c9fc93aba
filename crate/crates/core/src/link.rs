//! The complementary log-log link and its inverse.
//!
//! Rates are modeled on the cloglog scale throughout: `cloglog(p)` is the log
//! of the continuous-time event rate that produces probability `p`, which is
//! what makes the transformed coordinates in the sampler natural.

use crate::error::{Error, Result};

/// cloglog(p) = log(-log(1 - p)) for p in (0, 1).
pub fn cloglog(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("cloglog requires p in (0,1), got {p}")));
    }
    Ok((-(-p).ln_1p()).ln())
}

/// Inverse cloglog: maps any real x to (0, 1).
#[inline]
pub fn icloglog(x: f64) -> f64 {
    -(-x.exp()).exp_m1()
}
