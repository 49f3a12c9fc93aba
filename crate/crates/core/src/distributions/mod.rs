//! Probability kernels: Wallenius' non-central hypergeometric distribution,
//! elementary log-densities used by the models, and the beta-fitting routine
//! that inverts reported binomial confidence intervals.

mod beta_fit;
mod nchg;

pub use beta_fit::{fit_beta_to_interval, invert_binomial_ci, IntervalFit};
pub use nchg::{nchg_log_pmf, nchg_sample, NchgParams};

use crate::special::ln_choose;

/// Binomial log-pmf, log P(X = x) for X ~ Binom(n, p).
///
/// Degenerate edges (p = 0 or p = 1) return 0 or -inf as appropriate, so
/// groups with zero confirmed cases or zero deaths evaluate cleanly.
pub fn binomial_ln_pmf(x: u64, n: u64, p: f64) -> f64 {
    if x > n || !(0.0..=1.0).contains(&p) {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(n, x) + x as f64 * p.ln() + (n - x) as f64 * (-p).ln_1p()
}

/// Central hypergeometric log-pmf: x successes in `draws` draws without
/// replacement from `successes` + `failures` items.
pub fn hypergeometric_ln_pmf(x: u64, successes: u64, failures: u64, draws: u64) -> f64 {
    if draws > successes + failures {
        return f64::NEG_INFINITY;
    }
    let lo = draws.saturating_sub(failures);
    let hi = successes.min(draws);
    if x < lo || x > hi {
        return f64::NEG_INFINITY;
    }
    ln_choose(successes, x) + ln_choose(failures, draws - x)
        - ln_choose(successes + failures, draws)
}

/// Normal log-density.
pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.918_938_533_204_672_7
}

/// Half-normal log-density on x >= 0 with scale parameter `scale`.
pub fn half_normal_ln_pdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    0.5 * (2.0 / std::f64::consts::PI).ln() - scale.ln() - 0.5 * z * z
}

/// Exponential log-density with rate `rate`.
pub fn exponential_ln_pdf(x: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    rate.ln() - rate * x
}
