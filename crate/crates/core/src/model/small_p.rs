//! The exact small-population model: latent case counts are kept in the
//! state and the confirmed-case likelihood is the non-central
//! hypergeometric,
//!
//! ```text
//! C_k  ~ Binom(P_k, IR_k)
//! CC_k | C_k ~ NCHyperGeo(C_k, P_k - C_k, T_k, phi_k)
//! D_k  | C_k ~ Binom(C_k, IFR_k)
//! ```
//!
//! with the same random effects and priors as the large-P model. The latent
//! counts are sampled with signed geometric-step Metropolis proposals.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distributions::{
    binomial_ln_pmf, exponential_ln_pdf, half_normal_ln_pdf, nchg_log_pmf, normal_ln_pdf,
    NchgParams,
};
use crate::error::Result;
use crate::link::icloglog;
use crate::sampler::{CoordKind, GroupCoords, PhiView, Target};

use super::types::{covariate_dims, GlobalParameters, GroupObservation, LatentState, PriorConfig};

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Latent case count support for one group: C must cover the deaths and the
/// confirmed cases, and leave enough non-cases for the negative tests.
fn c_support(g: &GroupObservation) -> (u64, u64) {
    let lo = g.deaths.max(g.confirmed);
    let hi = g.population - (g.tests - g.confirmed);
    (lo, hi)
}

/// Unnormalized log posterior of the small-P model at natural-scale values.
///
/// Every latent state must carry a case count `c`. Returns `-inf` off the
/// support (counts outside their range, rates outside (0,1), phi violations)
/// rather than erroring, so Metropolis rejections handle excursions.
pub fn log_density_small_p(
    groups: &[GroupObservation],
    latents: &[LatentState],
    params: &GlobalParameters,
    prior: &PriorConfig,
) -> f64 {
    assert_eq!(groups.len(), latents.len(), "one latent state per group");
    let (h, q) = match covariate_dims(groups) {
        Ok(dims) => dims,
        Err(_) => return f64::NEG_INFINITY,
    };
    assert_eq!(params.beta_coefs.len(), h, "IR coefficient count");
    assert_eq!(params.theta_coefs.len(), q, "IFR coefficient count");

    let any_unknown = groups.iter().any(|g| !g.phi_known_one);
    if !(params.sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    if prior.fixed_effects {
        if params.tau != 0.0 {
            return f64::NEG_INFINITY;
        }
    } else if !(params.tau > 0.0) {
        return f64::NEG_INFINITY;
    }
    if any_unknown && !(params.gamma > 0.0) {
        return f64::NEG_INFINITY;
    }

    let mut lp = 0.0;
    for (g, l) in groups.iter().zip(latents) {
        let Some(c) = l.c else {
            return f64::NEG_INFINITY;
        };
        let (c_lo, c_hi) = c_support(g);
        if c < c_lo || c > c_hi {
            return f64::NEG_INFINITY;
        }
        if !(l.ir > 0.0 && l.ir < 1.0) {
            return f64::NEG_INFINITY;
        }
        if g.phi_known_one {
            if l.phi != 1.0 {
                return f64::NEG_INFINITY;
            }
        } else if !(l.phi >= 1.0 && l.phi <= 1.0 + params.gamma) {
            return f64::NEG_INFINITY;
        }

        let m1 = params.beta
            + params
                .beta_coefs
                .iter()
                .zip(&g.ir_covariates)
                .map(|(cf, x)| cf * x)
                .sum::<f64>();
        let m2 = params.theta
            + params
                .theta_coefs
                .iter()
                .zip(&g.ifr_covariates)
                .map(|(cf, z)| cf * z)
                .sum::<f64>();

        let ifr = if prior.fixed_effects {
            icloglog(m2)
        } else {
            if !(l.ifr > 0.0 && l.ifr < 1.0) {
                return f64::NEG_INFINITY;
            }
            l.ifr
        };

        // D | C ~ Binom(C, IFR)
        lp += binomial_ln_pmf(g.deaths, c, ifr);
        // CC | C ~ NCHG(C, P - C, T, phi)
        let nchg = NchgParams {
            n_cases: c,
            n_noncases: g.population - c,
            n_draws: g.tests,
            odds: l.phi,
        };
        match nchg_log_pmf(g.confirmed, &nchg) {
            Ok(v) => lp += v,
            Err(_) => return f64::NEG_INFINITY,
        }
        // C ~ Binom(P, IR)
        lp += binomial_ln_pmf(c, g.population, l.ir);

        let kappa1 = (-(-l.ir).ln_1p()).ln();
        lp += normal_ln_pdf(kappa1, m1, params.sigma);
        if !prior.fixed_effects {
            let kappa2 = (-(-ifr).ln_1p()).ln();
            lp += normal_ln_pdf(kappa2, m2, params.tau);
        }
        if !g.phi_known_one {
            lp -= params.gamma.ln();
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
    }

    lp += params.theta - params.theta.exp();
    lp += params.beta - params.beta.exp();
    lp += half_normal_ln_pdf(params.sigma, 1.0);
    if !prior.fixed_effects {
        lp += half_normal_ln_pdf(params.tau, prior.eta);
    }
    if any_unknown {
        lp += exponential_ln_pdf(params.gamma, prior.lambda);
    }
    for cf in params.theta_coefs.iter().chain(&params.beta_coefs) {
        lp += normal_ln_pdf(*cf, 0.0, prior.coef_sd);
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

/// The small-P posterior as a sampler target. Coordinates mirror
/// [`super::large_p::LargeModel`] plus one integer case-count coordinate per
/// group (proposed with geometric steps).
pub struct SmallModel {
    groups: Vec<GroupObservation>,
    prior: PriorConfig,
    t_theta: usize,
    t_beta: usize,
    log_sigma: usize,
    log_tau: Option<usize>,
    log_gamma: Option<usize>,
    kappa1: Vec<usize>,
    kappa2: Vec<Option<usize>>,
    u: Vec<Option<usize>>,
    c: Vec<usize>,
    dim: usize,
}

impl SmallModel {
    pub fn new(groups: Vec<GroupObservation>, prior: PriorConfig) -> Result<Self> {
        for g in &groups {
            g.validate()?;
        }
        prior.validate()?;
        covariate_dims(&groups)?;
        let any_unknown = groups.iter().any(|g| !g.phi_known_one);
        let mut next = 0usize;
        let take = |next: &mut usize| {
            let i = *next;
            *next += 1;
            i
        };
        let t_theta = take(&mut next);
        let t_beta = take(&mut next);
        let log_sigma = take(&mut next);
        let log_tau = if prior.fixed_effects {
            None
        } else {
            Some(take(&mut next))
        };
        let log_gamma = if any_unknown { Some(take(&mut next)) } else { None };
        let mut kappa1 = Vec::new();
        let mut kappa2 = Vec::new();
        let mut u = Vec::new();
        let mut c = Vec::new();
        for g in &groups {
            kappa1.push(take(&mut next));
            kappa2.push(if prior.fixed_effects {
                None
            } else {
                Some(take(&mut next))
            });
            u.push(if g.phi_known_one {
                None
            } else {
                Some(take(&mut next))
            });
            c.push(take(&mut next));
        }
        Ok(Self {
            groups,
            prior,
            t_theta,
            t_beta,
            log_sigma,
            log_tau,
            log_gamma,
            kappa1,
            kappa2,
            u,
            c,
            dim: next,
        })
    }

    fn gamma_of(&self, v: &[f64]) -> f64 {
        self.log_gamma.map_or(0.0, |i| v[i].exp())
    }

    /// Natural-scale parameters and latents encoded by a state vector.
    pub fn decode(&self, v: &[f64]) -> (GlobalParameters, Vec<LatentState>) {
        let theta = softplus(v[self.t_theta]).ln();
        let beta = softplus(v[self.t_beta]).ln();
        let sigma = v[self.log_sigma].exp();
        let tau = self.log_tau.map_or(0.0, |i| v[i].exp());
        let gamma = self.gamma_of(v);
        let latents = (0..self.groups.len())
            .map(|k| {
                let ir = icloglog(v[self.kappa1[k]]);
                let ifr = match self.kappa2[k] {
                    Some(i) => icloglog(v[i]),
                    None => icloglog(theta),
                };
                let phi = match self.u[k] {
                    Some(i) => 1.0 + gamma * sigmoid(v[i]),
                    None => 1.0,
                };
                LatentState {
                    c: Some(v[self.c[k]] as u64),
                    ir,
                    ifr,
                    phi,
                }
            })
            .collect();
        (
            GlobalParameters {
                theta,
                tau,
                beta,
                sigma,
                gamma,
                theta_coefs: vec![],
                beta_coefs: vec![],
            },
            latents,
        )
    }

    /// Log Jacobian of the transforms, bridging the natural-scale op.
    pub fn log_jacobian(&self, v: &[f64]) -> f64 {
        let mut jac = 0.0;
        for &t in &[self.t_theta, self.t_beta] {
            let s = sigmoid(v[t]);
            jac += (s / softplus(v[t])).ln();
        }
        jac += v[self.log_sigma];
        if let Some(i) = self.log_tau {
            jac += v[i];
        }
        if let Some(i) = self.log_gamma {
            jac += v[i];
        }
        let gamma = self.gamma_of(v);
        for u in self.u.iter().flatten() {
            let s = sigmoid(v[*u]);
            jac += (gamma * s * (1.0 - s)).ln();
        }
        jac
    }
}

impl Target for SmallModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn coord_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim];
        names[self.t_theta] = "t_theta".into();
        names[self.t_beta] = "t_beta".into();
        names[self.log_sigma] = "log_sigma".into();
        if let Some(i) = self.log_tau {
            names[i] = "log_tau".into();
        }
        if let Some(i) = self.log_gamma {
            names[i] = "log_gamma".into();
        }
        for k in 0..self.groups.len() {
            names[self.kappa1[k]] = format!("kappa_ir[{k}]");
            if let Some(i) = self.kappa2[k] {
                names[i] = format!("kappa_ifr[{k}]");
            }
            if let Some(i) = self.u[k] {
                names[i] = format!("phi_u[{k}]");
            }
            names[self.c[k]] = format!("cases[{k}]");
        }
        names
    }

    fn coord_kinds(&self) -> Vec<CoordKind> {
        let mut kinds = vec![CoordKind::Continuous; self.dim];
        for &i in &self.c {
            kinds[i] = CoordKind::Count;
        }
        kinds
    }

    fn log_density(&self, v: &[f64]) -> f64 {
        let (params, latents) = self.decode(v);
        let natural = log_density_small_p(&self.groups, &latents, &params, &self.prior);
        if natural == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        natural + self.log_jacobian(v)
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let clip = |p: f64| {
            let p = if p.is_finite() { p } else { 0.5 };
            p.clamp(1e-6, 1.0 - 1e-6)
        };
        let crude_cloglog = |num: u64, den: u64| {
            let rate = if den > 0 { num as f64 / den as f64 } else { 0.5 };
            (-(-clip(rate)).ln_1p()).ln()
        };
        let mut k1_sum = 0.0;
        let mut k2_sum = 0.0;
        for (k, g) in self.groups.iter().enumerate() {
            let k1 = crude_cloglog(g.confirmed, g.tests);
            k1_sum += k1;
            v[self.kappa1[k]] = k1 + 0.05 * rng.sample::<f64, _>(StandardNormal);
            let crude_ifr = crude_cloglog(g.deaths, g.population);
            k2_sum += crude_ifr;
            if let Some(i) = self.kappa2[k] {
                v[i] = crude_ifr + 0.05 * rng.sample::<f64, _>(StandardNormal);
            }
            if let Some(i) = self.u[k] {
                v[i] = 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
            // crude cases: positivity-scaled population, inside the support
            let (c_lo, c_hi) = c_support(g);
            let crude = if g.tests > 0 {
                (g.confirmed as f64 / g.tests as f64 * g.population as f64).round() as u64
            } else {
                g.population / 10
            };
            v[self.c[k]] = crude.clamp(c_lo.max(1), c_hi.max(1)) as f64;
        }
        let n = self.groups.len() as f64;
        let to_t = |cl: f64| {
            let s = icloglog(cl).clamp(1e-9, 1.0 - 1e-9);
            (s / (1.0 - s)).ln()
        };
        v[self.t_theta] = to_t(k2_sum / n) + 0.1 * rng.sample::<f64, _>(StandardNormal);
        v[self.t_beta] = to_t(k1_sum / n) + 0.1 * rng.sample::<f64, _>(StandardNormal);
        v[self.log_sigma] = 0.5_f64.ln() + 0.1 * rng.sample::<f64, _>(StandardNormal);
        if let Some(i) = self.log_tau {
            v[i] = self.prior.eta.ln() + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        if let Some(i) = self.log_gamma {
            v[i] = (1.0 / self.prior.lambda).ln() + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        v
    }

    fn group_coords(&self) -> Vec<GroupCoords> {
        (0..self.groups.len())
            .map(|k| GroupCoords {
                phi: self.u[k],
                kappa_ir: self.kappa1[k],
                kappa_ifr: self.kappa2[k],
            })
            .collect()
    }

    fn phi_view(&self, v: &[f64], k: usize) -> Option<PhiView> {
        let i = self.u[k]?;
        let gamma = self.gamma_of(v);
        let s = sigmoid(v[i]);
        Some(PhiView {
            phi: 1.0 + gamma * s,
            dphi_dcoord: gamma * s * (1.0 - s),
        })
    }

    fn phi_coord_from(&self, v: &[f64], k: usize, phi: f64) -> Option<f64> {
        self.u[k]?;
        let gamma = self.gamma_of(v);
        let frac = (phi - 1.0) / gamma;
        if !(frac > 0.0 && frac < 1.0) {
            return None;
        }
        Some((frac / (1.0 - frac)).ln())
    }

    fn bound_coord(&self) -> Option<usize> {
        self.log_gamma
    }

    fn tracked_names(&self) -> Vec<String> {
        let mut names = vec![
            "theta".to_string(),
            "beta".to_string(),
            "sigma".to_string(),
            "ifr_overall".to_string(),
        ];
        if self.log_tau.is_some() {
            names.push("tau".into());
        }
        if self.log_gamma.is_some() {
            names.push("gamma".into());
        }
        for k in 0..self.groups.len() {
            names.push(format!("ir[{k}]"));
            names.push(format!("ifr[{k}]"));
            names.push(format!("cases[{k}]"));
            if self.u[k].is_some() {
                names.push(format!("phi[{k}]"));
            }
        }
        names
    }

    fn tracked(&self, v: &[f64]) -> Vec<f64> {
        let (params, latents) = self.decode(v);
        let mut out = vec![
            params.theta,
            params.beta,
            params.sigma,
            icloglog(params.theta),
        ];
        if self.log_tau.is_some() {
            out.push(params.tau);
        }
        if self.log_gamma.is_some() {
            out.push(params.gamma);
        }
        for (k, lat) in latents.iter().enumerate() {
            out.push(lat.ir);
            out.push(lat.ifr);
            out.push(lat.c.unwrap_or(0) as f64);
            if self.u[k].is_some() {
                out.push(lat.phi);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_group() -> GroupObservation {
        GroupObservation::new("toy", 20, 5, 2, 1, false).unwrap()
    }

    fn latents(c: u64) -> Vec<LatentState> {
        vec![LatentState {
            c: Some(c),
            ir: 0.3,
            ifr: 0.1,
            phi: 2.0,
        }]
    }

    fn params() -> GlobalParameters {
        GlobalParameters {
            theta: -2.0,
            tau: 0.2,
            beta: -1.0,
            sigma: 0.5,
            gamma: 4.0,
            theta_coefs: vec![],
            beta_coefs: vec![],
        }
    }

    #[test]
    fn deaths_exceeding_cases_impossible() {
        let groups = vec![tiny_group()];
        // C = 0 < D = 1 violates the support
        let mut lat = latents(0);
        lat[0].c = Some(0);
        assert_eq!(
            log_density_small_p(&groups, &lat, &params(), &PriorConfig::default()),
            f64::NEG_INFINITY
        );
        assert!(
            log_density_small_p(&groups, &latents(6), &params(), &PriorConfig::default())
                .is_finite()
        );
    }

    #[test]
    fn phi_above_bound_impossible() {
        let groups = vec![tiny_group()];
        let mut lat = latents(6);
        lat[0].phi = 5.5; // above 1 + gamma = 5
        assert_eq!(
            log_density_small_p(&groups, &lat, &params(), &PriorConfig::default()),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn sampler_density_bridges_to_natural_op() {
        let groups = vec![
            tiny_group(),
            GroupObservation::new("known", 30, 6, 3, 1, true).unwrap(),
        ];
        let model = SmallModel::new(groups.clone(), PriorConfig::default()).unwrap();
        let mut rng = crate::streams::substream(3, &[0]);
        for _ in 0..10 {
            let v = model.initial_state(&mut rng);
            let direct = model.log_density(&v);
            let (p, lat) = model.decode(&v);
            let natural = log_density_small_p(&groups, &lat, &p, &PriorConfig::default());
            assert!(
                (direct - natural - model.log_jacobian(&v)).abs() < 1e-9,
                "bridge mismatch"
            );
        }
    }
}
