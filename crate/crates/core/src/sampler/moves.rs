//! Metropolis moves: univariate random walks, integer-coordinate walks,
//! per-group block proposals, and the two transformed-coordinate moves with
//! their Jacobian corrections.

use rand::{Rng, RngExt};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::target::Target;

/// Forward map of the rate transform:
/// `(z1, z2) = (exp(k1) + exp(k2), exp(k1) - exp(k2))`.
pub fn rates_forward(kappa1: f64, kappa2: f64) -> (f64, f64) {
    let e1 = kappa1.exp();
    let e2 = kappa2.exp();
    (e1 + e2, e1 - e2)
}

/// Inverse of [`rates_forward`]; `None` when either implied rate is
/// non-positive.
pub fn rates_inverse(z1: f64, z2: f64) -> Option<(f64, f64)> {
    let e1 = 0.5 * (z1 + z2);
    let e2 = 0.5 * (z1 - z2);
    if e1 > 0.0 && e2 > 0.0 {
        Some((e1.ln(), e2.ln()))
    } else {
        None
    }
}

/// |det d(z1,z2)/d(k1,k2)| = 2 exp(k1 + k2).
pub fn rates_jacobian_det(kappa1: f64, kappa2: f64) -> f64 {
    2.0 * (kappa1 + kappa2).exp()
}

/// Forward map of the preferentiality transform:
/// `(z1, z2) = (log(phi) + k1, log(phi) - k1)`.
pub fn phi_forward(phi: f64, kappa1: f64) -> (f64, f64) {
    let lp = phi.ln();
    (lp + kappa1, lp - kappa1)
}

/// Inverse of [`phi_forward`]: `(phi, k1)`.
pub fn phi_inverse(z1: f64, z2: f64) -> (f64, f64) {
    ((0.5 * (z1 + z2)).exp(), 0.5 * (z1 - z2))
}

/// |det d(z1,z2)/d(phi,k1)| = 2 / phi.
pub fn phi_jacobian_det(phi: f64) -> f64 {
    2.0 / phi
}

/// Accept/reject helper; returns the acceptance probability actually used.
fn metropolis<R: Rng>(rng: &mut R, log_ratio: f64) -> (bool, f64) {
    let acc = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
    let accept = acc >= 1.0 || rng.random::<f64>() < acc;
    (accept, acc)
}

/// One univariate Gaussian random-walk update of coordinate `j`.
///
/// Returns the acceptance probability for scale adaptation.
pub fn univariate_step<T: Target + ?Sized>(
    target: &T,
    v: &mut [f64],
    lp: &mut f64,
    j: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let old = v[j];
    let z: f64 = rng.sample(StandardNormal);
    v[j] = old + scale * z;
    let lp_new = target.log_density(v);
    let (accept, acc) = metropolis(rng, lp_new - *lp);
    if accept && lp_new.is_finite() {
        *lp = lp_new;
    } else {
        v[j] = old;
    }
    acc
}

/// One signed geometric-step update of an integer-valued coordinate.
///
/// The magnitude is geometric with mean `1 + scale` and the sign is
/// symmetric, so the proposal is symmetric on the integers.
pub fn count_step<T: Target + ?Sized>(
    target: &T,
    v: &mut [f64],
    lp: &mut f64,
    j: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let old = v[j];
    let q = scale / (1.0 + scale);
    let mut magnitude = 1.0;
    while rng.random::<f64>() < q && magnitude < 1e6 {
        magnitude += 1.0;
    }
    let sign = if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 };
    v[j] = old + sign * magnitude;
    let lp_new = target.log_density(v);
    let (accept, acc) = metropolis(rng, lp_new - *lp);
    if accept && lp_new.is_finite() {
        *lp = lp_new;
    } else {
        v[j] = old;
    }
    acc
}

/// One joint Gaussian random-walk update of a coordinate block.
///
/// `chol` is the lower Cholesky factor (row-major, `dim x dim`) of the
/// adapted proposal covariance; `scale` multiplies it.
pub fn block_step<T: Target + ?Sized>(
    target: &T,
    v: &mut [f64],
    lp: &mut f64,
    coords: &[usize],
    chol: &[f64],
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let dim = coords.len();
    let old: Vec<f64> = coords.iter().map(|&c| v[c]).collect();
    let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..dim {
        let mut step = 0.0;
        for k in 0..=i {
            step += chol[i * dim + k] * z[k];
        }
        v[coords[i]] = old[i] + scale * step;
    }
    let lp_new = target.log_density(v);
    let (accept, acc) = metropolis(rng, lp_new - *lp);
    if accept && lp_new.is_finite() {
        *lp = lp_new;
    } else {
        for (i, &c) in coords.iter().enumerate() {
            v[c] = old[i];
        }
    }
    acc
}

/// One move in the `(exp(k1) + exp(k2), exp(k1) - exp(k2))` coordinates,
/// stepping the weakly identified `z2` direction.
///
/// The acceptance ratio transforms the target density into z-space with
/// `log p(z) = log p(k) - log|J|`, `|J| = 2 exp(k1 + k2)`; proposals whose
/// inverse would need a non-positive rate are rejected outright.
pub fn rates_transform_step<T: Target + ?Sized>(
    target: &T,
    v: &mut [f64],
    lp: &mut f64,
    idx_k1: usize,
    idx_k2: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let k1 = v[idx_k1];
    let k2 = v[idx_k2];
    let (z1, z2) = rates_forward(k1, k2);
    let znoise: f64 = rng.sample(StandardNormal);
    let z2_new = z2 + scale * znoise;
    let Some((k1_new, k2_new)) = rates_inverse(z1, z2_new) else {
        // consume the accept draw so the rejection costs one uniform too
        let _ = rng.random::<f64>();
        return 0.0;
    };
    v[idx_k1] = k1_new;
    v[idx_k2] = k2_new;
    let lp_new = target.log_density(v);
    let log_ratio = (lp_new - rates_jacobian_det(k1_new, k2_new).ln())
        - (*lp - rates_jacobian_det(k1, k2).ln());
    let (accept, acc) = metropolis(rng, log_ratio);
    if accept && lp_new.is_finite() {
        *lp = lp_new;
    } else {
        v[idx_k1] = k1;
        v[idx_k2] = k2;
    }
    acc
}

/// One move in the `(log(phi) + k1, log(phi) - k1)` coordinates, stepping
/// `z2`; `|J| = 2/phi` with a further factor for the coordinate that stores
/// phi in transformed form.
pub fn phi_transform_step<T: Target + ?Sized>(
    target: &T,
    v: &mut [f64],
    lp: &mut f64,
    group: usize,
    idx_phi: usize,
    idx_k1: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let Some(view) = target.phi_view(v, group) else {
        return 0.0;
    };
    let k1 = v[idx_k1];
    let (z1, z2) = phi_forward(view.phi, k1);
    let znoise: f64 = rng.sample(StandardNormal);
    let z2_new = z2 + scale * znoise;
    let (phi_new, k1_new) = phi_inverse(z1, z2_new);
    let Some(phi_coord_new) = target.phi_coord_from(v, group, phi_new) else {
        let _ = rng.random::<f64>();
        return 0.0;
    };
    let old_phi_coord = v[idx_phi];
    v[idx_phi] = phi_coord_new;
    v[idx_k1] = k1_new;
    let lp_new = target.log_density(v);
    let view_new = target
        .phi_view(v, group)
        .expect("phi view must exist for proposed state");
    // z-space density: p(k)/(|d z/d phi,k1| * |d phi/d coord|)
    let log_jac_old = (phi_jacobian_det(view.phi) * view.dphi_dcoord.abs()).ln();
    let log_jac_new = (phi_jacobian_det(view_new.phi) * view_new.dphi_dcoord.abs()).ln();
    let log_ratio = (lp_new - log_jac_new) - (*lp - log_jac_old);
    let (accept, acc) = metropolis(rng, log_ratio);
    if accept && lp_new.is_finite() {
        *lp = lp_new;
    } else {
        v[idx_phi] = old_phi_coord;
        v[idx_k1] = k1;
    }
    acc
}

/// One slide along a group's weakly identified ridge: `kappa1 += delta`,
/// `kappa2 -= delta`, `phi *= exp(-delta)`.
///
/// The death likelihood pins `kappa1 + kappa2` and the confirmed-case
/// likelihood pins `log(phi) + kappa1`; both are invariant under this map,
/// so the slide traverses the direction the data leave free. The kappa
/// shifts are volume-preserving; re-encoding phi contributes
/// `-delta + log(dphi/du) - log(dphi'/du')` to the acceptance ratio. Groups
/// without a phi coordinate slide `(kappa1, kappa2)` alone.
pub fn trio_slide_step<T: Target + ?Sized>(
    target: &T,
    v: &mut [f64],
    lp: &mut f64,
    group: usize,
    idx_phi: Option<usize>,
    idx_k1: usize,
    idx_k2: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let delta = scale * rng.sample::<f64, _>(StandardNormal);
    let old_k1 = v[idx_k1];
    let old_k2 = v[idx_k2];
    let mut log_jac = 0.0;
    let old_phi_coord = match idx_phi {
        Some(idx) => {
            let view = target.phi_view(v, group).expect("phi view for phi group");
            let phi_new = view.phi * (-delta).exp();
            let old_coord = v[idx];
            let Some(new_coord) = target.phi_coord_from(v, group, phi_new) else {
                let _ = rng.random::<f64>();
                return 0.0;
            };
            log_jac += view.dphi_dcoord.abs().ln() - delta;
            v[idx] = new_coord;
            let view_new = target.phi_view(v, group).expect("phi view for proposal");
            log_jac -= view_new.dphi_dcoord.abs().ln();
            Some((idx, old_coord))
        }
        None => None,
    };
    v[idx_k1] = old_k1 + delta;
    v[idx_k2] = old_k2 - delta;
    let lp_new = target.log_density(v);
    let (accept, acc) = metropolis(rng, lp_new - *lp + log_jac);
    if accept && lp_new.is_finite() {
        *lp = lp_new;
    } else {
        v[idx_k1] = old_k1;
        v[idx_k2] = old_k2;
        if let Some((idx, coord)) = old_phi_coord {
            v[idx] = coord;
        }
    }
    acc
}

/// One move of the shared preferentiality bound that holds every natural
/// phi fixed.
///
/// The proposal steps `log(bound)` and re-encodes each group's phi
/// coordinate under the new bound; groups whose phi falls outside the new
/// support force rejection. The deterministic re-encoding contributes the
/// ratio of `dphi/dcoord` Jacobians to the acceptance probability.
pub fn bound_rescale_step<T: Target + ?Sized>(
    target: &T,
    v: &mut [f64],
    lp: &mut f64,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let Some(bound_idx) = target.bound_coord() else {
        return 0.0;
    };
    let groups = target.group_coords();
    let phi_groups: Vec<(usize, usize)> = groups
        .iter()
        .enumerate()
        .filter_map(|(k, g)| g.phi.map(|idx| (k, idx)))
        .collect();

    let old_bound_coord = v[bound_idx];
    let old_phi_coords: Vec<f64> = phi_groups.iter().map(|&(_, idx)| v[idx]).collect();
    let mut log_jac = 0.0;
    let mut phis = Vec::with_capacity(phi_groups.len());
    for &(k, _) in &phi_groups {
        let view = target.phi_view(v, k).expect("phi view for phi group");
        log_jac += view.dphi_dcoord.abs().ln();
        phis.push(view.phi);
    }

    let z: f64 = rng.sample(StandardNormal);
    v[bound_idx] = old_bound_coord + scale * z;

    let mut feasible = true;
    for (&(k, idx), &phi) in phi_groups.iter().zip(&phis) {
        match target.phi_coord_from(v, k, phi) {
            Some(coord) => v[idx] = coord,
            None => {
                feasible = false;
                break;
            }
        }
    }
    if !feasible {
        v[bound_idx] = old_bound_coord;
        for (&(_, idx), &coord) in phi_groups.iter().zip(&old_phi_coords) {
            v[idx] = coord;
        }
        let _ = rng.random::<f64>();
        return 0.0;
    }
    for &(k, _) in &phi_groups {
        let view = target.phi_view(v, k).expect("phi view for proposed state");
        log_jac -= view.dphi_dcoord.abs().ln();
    }

    let lp_new = target.log_density(v);
    let (accept, acc) = metropolis(rng, lp_new - *lp + log_jac);
    if accept && lp_new.is_finite() {
        *lp = lp_new;
    } else {
        v[bound_idx] = old_bound_coord;
        for (&(_, idx), &coord) in phi_groups.iter().zip(&old_phi_coords) {
            v[idx] = coord;
        }
    }
    acc
}
