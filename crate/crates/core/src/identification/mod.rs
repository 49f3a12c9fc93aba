//! Partial identification of the average IFR.
//!
//! In the asymptotic limit each group's data reduce to two signals: the
//! death rate `a = IFR * IR` and the test-positivity limit
//! `b = 1 - (1 - IR)^phi`. Given investigator bounds on the preferential
//! testing odds `phi`, each group confines its IFR to an interval; a cap on
//! the cross-group IFR heterogeneity then confines the *average* IFR to a
//! global interval found by a variance-minimizing projection nested in a
//! grid search.

use serde::Serialize;

use crate::error::{Error, Result};

/// Asymptotic signals and preferentiality bounds for one group.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GroupSignal {
    /// Death rate IFR * IR.
    pub a: f64,
    /// Positivity limit 1 - (1 - IR)^phi.
    pub b: f64,
    /// Lower bound on phi.
    pub phi_lo: f64,
    /// Upper bound on phi.
    pub phi_hi: f64,
}

impl GroupSignal {
    pub fn new(a: f64, b: f64, phi_lo: f64, phi_hi: f64) -> Result<Self> {
        if !(a > 0.0) || !(b > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "signals must be positive, got a={a}, b={b}"
            )));
        }
        if !(phi_lo > 0.0 && phi_lo <= phi_hi) {
            return Err(Error::InvalidParameter(format!(
                "phi bounds must satisfy 0 < phi_lo <= phi_hi, got ({phi_lo}, {phi_hi})"
            )));
        }
        Ok(Self {
            a,
            b,
            phi_lo,
            phi_hi,
        })
    }
}

/// A closed identification interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentInterval {
    pub lower: f64,
    pub upper: f64,
}

impl IdentInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// A global identification problem over K groups.
#[derive(Debug, Clone)]
pub struct GlobalProblem {
    pub signals: Vec<GroupSignal>,
    /// Cap on the cross-group IFR standard deviation.
    pub tau_bar: f64,
    /// Grid resolution of the membership scan, in IFR units.
    pub grid_step: f64,
}

impl GlobalProblem {
    pub fn new(signals: Vec<GroupSignal>, tau_bar: f64) -> Result<Self> {
        if signals.is_empty() {
            return Err(Error::InvalidParameter(
                "identification problem needs at least one group".into(),
            ));
        }
        if !(tau_bar >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau_bar must be nonnegative, got {tau_bar}"
            )));
        }
        Ok(Self {
            signals,
            tau_bar,
            grid_step: 1e-4,
        })
    }
}

/// The IFR compatible with signals (a, b) at a given phi:
/// `a / (1 - (1 - b)^(1/phi))`, strictly increasing in phi.
pub fn ifr_of_phi(a: f64, b: f64, phi: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    if !(phi > 0.0) {
        return Err(Error::Domain(format!("phi must be positive, got {phi}")));
    }
    if b <= 0.0 {
        return Err(Error::Domain(format!("b must be positive, got {b}")));
    }
    if b >= 1.0 {
        // (1-b)^(1/phi) = 0: the limit is a itself.
        return Ok(a);
    }
    // 1 - (1-b)^(1/phi) computed as -expm1(ln(1-b)/phi)
    let denom = -((-b).ln_1p() / phi).exp_m1();
    Ok(a / denom)
}

/// Identification interval for one group, by monotonicity of `ifr_of_phi`.
pub fn group_interval(signal: &GroupSignal) -> Result<IdentInterval> {
    let lower = ifr_of_phi(signal.a, signal.b, signal.phi_lo)?;
    let upper = ifr_of_phi(signal.a, signal.b, signal.phi_hi)?;
    Ok(IdentInterval { lower, upper })
}

/// Global interval under zero heterogeneity: the intersection of the group
/// intervals, or `None` when they are disjoint.
pub fn global_interval_tau0(intervals: &[IdentInterval]) -> Option<IdentInterval> {
    let lower = intervals.iter().map(|i| i.lower).fold(f64::MIN, f64::max);
    let upper = intervals.iter().map(|i| i.upper).fold(f64::MAX, f64::min);
    if lower <= upper {
        Some(IdentInterval { lower, upper })
    } else {
        None
    }
}

/// Minimal (1/K) sum of (f_k - x)^2 over f_k in the boxes subject to the
/// mean of f equalling x; `+inf` when the mean is infeasible.
///
/// The optimum has the projection structure f_k = clamp(x + mu, box_k) with
/// mu chosen by bisection on the monotone mean constraint.
pub fn min_variance_at_mean(x: f64, boxes: &[IdentInterval]) -> f64 {
    let k = boxes.len() as f64;
    let sum_lo: f64 = boxes.iter().map(|b| b.lower).sum();
    let sum_hi: f64 = boxes.iter().map(|b| b.upper).sum();
    let target = k * x;
    let feas_tol = 1e-12 * (1.0 + target.abs());
    if target < sum_lo - feas_tol || target > sum_hi + feas_tol {
        return f64::INFINITY;
    }

    let mean_at = |mu: f64| -> f64 {
        boxes
            .iter()
            .map(|b| (x + mu).clamp(b.lower, b.upper))
            .sum::<f64>()
            / k
    };
    let mut mu_lo = boxes
        .iter()
        .map(|b| b.lower - x)
        .fold(f64::MAX, f64::min)
        - 1.0;
    let mut mu_hi = boxes
        .iter()
        .map(|b| b.upper - x)
        .fold(f64::MIN, f64::max)
        + 1.0;
    // mean_at is nondecreasing in mu; bisect to 1e-12.
    while mu_hi - mu_lo > 1e-12 {
        let mid = 0.5 * (mu_lo + mu_hi);
        if mean_at(mid) < x {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }
    }
    let mu = 0.5 * (mu_lo + mu_hi);
    boxes
        .iter()
        .map(|b| {
            let f = (x + mu).clamp(b.lower, b.upper);
            (f - x) * (f - x)
        })
        .sum::<f64>()
        / k
}

/// Global identification interval for the average IFR.
///
/// Computes the per-group intervals, then scans candidate means outward in
/// `grid_step` increments from a feasible interior point, keeping each
/// candidate whose minimized cross-group variance stays within the
/// heterogeneity cap. Heterogeneity is measured as the sample SD across
/// groups (divisor K-1), matching the reference convention; with
/// `tau_bar = 0` the scan reduces exactly to the interval intersection.
/// Returns `None` when no candidate mean is feasible.
pub fn global_interval(problem: &GlobalProblem) -> Result<Option<IdentInterval>> {
    let boxes: Vec<IdentInterval> = problem
        .signals
        .iter()
        .map(group_interval)
        .collect::<Result<_>>()?;
    let k = boxes.len();

    let intersection = global_interval_tau0(&boxes);
    if problem.tau_bar == 0.0 || k == 1 {
        return Ok(intersection);
    }

    // Membership: minimized sample variance within the cap.
    let threshold = problem.tau_bar * problem.tau_bar * (k as f64 - 1.0) / k as f64;
    let member = |x: f64| min_variance_at_mean(x, &boxes) <= threshold;

    // A feasible starting point: the intersection midpoint when it exists,
    // otherwise the minimizer of the (convex) minimized variance.
    let start = match &intersection {
        Some(i) => 0.5 * (i.lower + i.upper),
        None => {
            let lo = boxes.iter().map(|b| b.lower).fold(f64::MAX, f64::min);
            let hi = boxes.iter().map(|b| b.upper).fold(f64::MIN, f64::max);
            crate::optimize::golden_section(
                |x| min_variance_at_mean(x, &boxes),
                lo,
                hi,
                1e-12,
            )
        }
    };
    if !member(start) {
        return Ok(None);
    }

    let step = problem.grid_step;
    let mut lower = start;
    while member(lower - step) {
        lower -= step;
    }
    let mut upper = start;
    while member(upper + step) {
        upper += step;
    }
    Ok(Some(IdentInterval { lower, upper }))
}

/// Sample standard deviation across a set of group-level IFR values.
pub fn ifr_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}
