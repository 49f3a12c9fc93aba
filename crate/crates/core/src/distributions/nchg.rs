//! Wallenius' non-central hypergeometric (NCHG) distribution.
//!
//! An urn holds `n_cases` cases and `n_noncases` non-cases; `n_draws` items
//! are taken one at a time without replacement, and at each step a remaining
//! case is drawn with probability `odds * c / (odds * c + m)` where `c` and
//! `m` are the remaining counts. `odds` is the preferential-testing odds
//! parameter: 1 recovers the central hypergeometric.
//!
//! This is Wallenius' distribution (sequential draws), not Fisher's
//! (simultaneous conditioning), which it is often confused with.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::special::ln_choose;

/// Parameters of the NCHG distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NchgParams {
    /// Cases in the urn (C).
    pub n_cases: u64,
    /// Non-cases in the urn (P - C).
    pub n_noncases: u64,
    /// Items drawn without replacement (T).
    pub n_draws: u64,
    /// Odds of drawing a case relative to a non-case (phi > 0).
    pub odds: f64,
}

impl NchgParams {
    pub fn new(n_cases: u64, n_noncases: u64, n_draws: u64, odds: f64) -> Result<Self> {
        if n_draws > n_cases + n_noncases {
            return Err(Error::InvalidParameter(format!(
                "n_draws ({n_draws}) exceeds urn size ({})",
                n_cases + n_noncases
            )));
        }
        if !(odds > 0.0 && odds.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "odds must be positive and finite, got {odds}"
            )));
        }
        Ok(Self {
            n_cases,
            n_noncases,
            n_draws,
            odds,
        })
    }

    /// Smallest number of cases that can be drawn.
    pub fn support_min(&self) -> u64 {
        self.n_draws.saturating_sub(self.n_noncases)
    }

    /// Largest number of cases that can be drawn.
    pub fn support_max(&self) -> u64 {
        self.n_cases.min(self.n_draws)
    }
}

/// Log-pmf of the NCHG distribution at `x`.
///
/// Evaluates `C(C,x) C(P-C,T-x) ∫₀¹ (1-t^{phi/B})^x (1-t^{1/B})^{T-x} dt`
/// with `B = phi (C-x) + (P-C-(T-x))` by adaptive quadrature.
///
/// For `B >= 1` the substitution `t = s^B` is applied first; it moves the
/// integrand's mass away from an underflowing neighborhood of t = 0 and
/// turns the log-integrand into a strictly concave bump whose peak is
/// subtracted before exponentiating, so the evaluation stays accurate for
/// population-scale counts. For `B < 1` (near-exhausted urns) the original
/// variable is already well behaved.
pub fn nchg_log_pmf(x: u64, params: &NchgParams) -> Result<f64> {
    let lo = params.support_min();
    let hi = params.support_max();
    if x < lo || x > hi {
        return Err(Error::Domain(format!(
            "x = {x} outside NCHG support [{lo}, {hi}]"
        )));
    }
    let c = params.n_cases;
    let m = params.n_noncases;
    let t = params.n_draws;
    let phi = params.odds;

    let b = phi * (c - x) as f64 + (m - (t - x)) as f64;
    if b == 0.0 {
        // The whole urn is drawn: the outcome is deterministic.
        return Ok(0.0);
    }
    if t == 0 {
        return Ok(0.0);
    }

    let ln_binoms = ln_choose(c, x) + ln_choose(m, t - x);
    let xf = x as f64;
    let rest = (t - x) as f64;

    let log_integral = if b >= 1.0 {
        log_integral_s_space(xf, rest, phi, b)
    } else {
        log_integral_t_space(xf, rest, phi, b)
    };
    Ok(ln_binoms + log_integral)
}

/// log of `B ∫₀¹ s^{B-1} (1 - s^phi)^x (1 - s)^{T-x} ds` via the concave
/// log-integrand `h(s) = (B-1) ln s + x ln(1-s^phi) + (T-x) ln(1-s)`.
fn log_integral_s_space(x: f64, rest: f64, phi: f64, b: f64) -> f64 {
    let h = |s: f64| -> f64 {
        let s = s.clamp(1e-300, 1.0 - 1e-16);
        let mut acc = (b - 1.0) * s.ln();
        if x > 0.0 {
            // ln(1 - s^phi) = ln(-expm1(phi ln s))
            acc += x * (-(phi * s.ln()).exp_m1()).ln();
        }
        if rest > 0.0 {
            acc += rest * (-s).ln_1p();
        }
        acc
    };
    // h' is strictly decreasing; bisect for the peak.
    let dh = |s: f64| -> f64 {
        let mut acc = (b - 1.0) / s;
        if x > 0.0 {
            let sp = (phi * s.ln()).exp();
            acc -= x * phi * sp / (s * (1.0 - sp));
        }
        if rest > 0.0 {
            acc -= rest / (1.0 - s);
        }
        acc
    };
    let mut lo = 1e-300_f64;
    let mut hi = 1.0 - 1e-16;
    let s_peak = if dh(lo.max(1e-12)) <= 0.0 {
        // maximum at the left edge (B = 1 with decreasing h)
        lo
    } else if dh(hi) >= 0.0 {
        hi
    } else {
        lo = 1e-12;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dh(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let m = h(s_peak);

    // Window where the integrand is above e^-45 of its peak; h is concave
    // so each side is monotone.
    let cutoff = m - 45.0;
    let mut s_lo = 0.0;
    if h(1e-300) < cutoff {
        let (mut a, mut z) = (1e-300, s_peak);
        for _ in 0..200 {
            let mid = 0.5 * (a + z);
            if h(mid) < cutoff {
                a = mid;
            } else {
                z = mid;
            }
        }
        s_lo = a;
    }
    let mut s_hi = 1.0;
    if h(1.0 - 1e-16) < cutoff {
        let (mut a, mut z) = (s_peak, 1.0 - 1e-16);
        for _ in 0..200 {
            let mid = 0.5 * (a + z);
            if h(mid) < cutoff {
                z = mid;
            } else {
                a = mid;
            }
        }
        s_hi = z;
    }

    let f = |s: f64| (h(s) - m).exp();
    let width = s_hi - s_lo;
    let (rough, _) = integrate(&f, s_lo, s_hi, 1e-4 * width);
    let tol = (rough.abs() * 1e-12).clamp(1e-305, 1e-10);
    let (integral, _) = integrate(&f, s_lo, s_hi, tol);
    if integral <= 0.0 {
        return f64::NEG_INFINITY;
    }
    b.ln() + m + integral.ln()
}

/// log of `∫₀¹ (1-t^{phi/B})^x (1-t^{1/B})^{T-x} dt` in the original
/// variable; the log-integrand decreases from 0 at t = 0, so the domain is
/// truncated where it falls below e^-45.
fn log_integral_t_space(x: f64, rest: f64, phi: f64, b: f64) -> f64 {
    let g = |ln_t: f64| -> f64 {
        let mut acc = 0.0;
        if x > 0.0 {
            acc += x * (-(phi / b * ln_t).exp()).ln_1p();
        }
        if rest > 0.0 {
            acc += rest * (-(ln_t / b).exp()).ln_1p();
        }
        acc
    };
    let cutoff = -45.0;
    let t_hi = if g(0.0) > cutoff {
        1.0
    } else {
        let mut lo_ln = -700.0;
        let mut hi_ln = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo_ln + hi_ln);
            if g(mid) > cutoff {
                lo_ln = mid;
            } else {
                hi_ln = mid;
            }
        }
        hi_ln.exp()
    };
    let f = |tv: f64| {
        if tv <= 0.0 {
            1.0
        } else {
            g(tv.ln()).exp()
        }
    };
    let (rough, _) = integrate(&f, 0.0, t_hi, 1e-4 * t_hi);
    let tol = (rough.abs() * 1e-12).clamp(1e-305, 1e-10);
    let (integral, _) = integrate(&f, 0.0, t_hi, tol);
    if integral <= 0.0 {
        return f64::NEG_INFINITY;
    }
    integral.ln()
}

/// Draw from the NCHG distribution by simulating the biased urn process.
pub fn nchg_sample<R: Rng + ?Sized>(params: &NchgParams, rng: &mut R) -> u64 {
    let mut cases = params.n_cases;
    let mut noncases = params.n_noncases;
    let phi = params.odds;
    let mut drawn = 0u64;
    for _ in 0..params.n_draws {
        if cases == 0 {
            break;
        }
        if noncases == 0 {
            drawn += params.n_draws - (params.n_cases - cases) - (params.n_noncases - noncases);
            break;
        }
        let weight_cases = phi * cases as f64;
        let p_case = weight_cases / (weight_cases + noncases as f64);
        if rng.random::<f64>() < p_case {
            cases -= 1;
            drawn += 1;
        } else {
            noncases -= 1;
        }
    }
    drawn
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::hypergeometric_ln_pmf;
    use crate::streams::substream;

    #[test]
    fn central_case_matches_hypergeometric() {
        // x=1, C=2, M=2, T=2, phi=1 -> 4/6
        let p = NchgParams::new(2, 2, 2, 1.0).unwrap();
        let got = nchg_log_pmf(1, &p).unwrap();
        assert!((got - (2.0 / 3.0_f64).ln()).abs() < 1e-9);
        // and across a larger support
        let p = NchgParams::new(6, 9, 5, 1.0).unwrap();
        for x in p.support_min()..=p.support_max() {
            let got = nchg_log_pmf(x, &p).unwrap();
            let want = hypergeometric_ln_pmf(x, 6, 9, 5);
            assert!((got - want).abs() < 1e-10, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn known_biased_value() {
        // Drawing both cases from C=3, M=2, T=2 at phi=2:
        // 6/8 * 4/6 = 1/2 by the sequential urn process.
        let p = NchgParams::new(3, 2, 2, 2.0).unwrap();
        let got = nchg_log_pmf(2, &p).unwrap();
        assert!((got - 0.5_f64.ln()).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn normalizes_over_support() {
        let p = NchgParams::new(5, 7, 4, 3.0).unwrap();
        let total: f64 = (p.support_min()..=p.support_max())
            .map(|x| nchg_log_pmf(x, &p).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-8, "total = {total}");
    }

    #[test]
    fn whole_urn_drawn_is_deterministic() {
        let p = NchgParams::new(4, 3, 7, 2.5).unwrap();
        assert_eq!(nchg_log_pmf(4, &p).unwrap(), 0.0);
        assert!(nchg_log_pmf(3, &p).is_err()); // 3 cases means 4 non-case draws > 3 available
    }

    #[test]
    fn out_of_support_rejected() {
        let p = NchgParams::new(5, 7, 4, 3.0).unwrap();
        assert!(nchg_log_pmf(5, &p).is_err());
        assert!(NchgParams::new(5, 7, 20, 3.0).is_err());
        assert!(NchgParams::new(5, 7, 4, 0.0).is_err());
        assert!(NchgParams::new(5, 7, 4, -1.0).is_err());
    }

    #[test]
    fn sampler_exhausts_cases_only() {
        // Only cases available: always draws all requested.
        let p = NchgParams::new(10, 0, 5, 2.0).unwrap();
        let mut rng = substream(1, &[0]);
        for _ in 0..50 {
            assert_eq!(nchg_sample(&p, &mut rng), 5);
        }
    }

    #[test]
    fn sampler_central_mean() {
        // phi = 1: hypergeometric mean T*C/(C+M) = 50.
        let p = NchgParams::new(500, 500, 100, 1.0).unwrap();
        let mut rng = substream(2, &[0]);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| nchg_sample(&p, &mut rng) as f64).sum::<f64>() / n as f64;
        // hypergeometric variance = T*C/(P)*(M/P)*(P-T)/(P-1) ~ 22.52
        let se = (22.52_f64 / n as f64).sqrt();
        assert!((mean - 50.0).abs() < 3.0 * se, "mean = {mean}, se = {se}");
    }

    #[test]
    fn large_population_pmf_is_finite() {
        // magnitudes from national-scale data must not overflow
        let p = NchgParams::new(1_000_000, 79_000_000, 2_000_000, 5.0).unwrap();
        let v = nchg_log_pmf(120_000, &p).unwrap();
        assert!(v.is_finite(), "log pmf = {v}");
    }
}
