//! The large-population model: the latent case count is marginalized out and
//! the confirmed-case likelihood becomes binomial,
//!
//! ```text
//! CC_k ~ Binom(T_k, 1 - (1 - IR_k)^phi_k)
//! D_k  ~ Binom(P_k, IFR_k * IR_k)
//! ```
//!
//! with Gaussian random effects on cloglog(IR) and cloglog(IFR), optional
//! group-level covariates shifting the random-effect means, and the priors
//! of the small-P model. On the cloglog scale the positivity parameter is
//! `1 - exp(-phi * exp(kappa1))`, which keeps every term smooth and gives
//! the model an analytic gradient.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distributions::{
    binomial_ln_pmf, exponential_ln_pdf, half_normal_ln_pdf, normal_ln_pdf,
};
use crate::error::Result;
use crate::link::icloglog;
use crate::sampler::{CoordKind, GroupCoords, PhiView, Target};
use crate::special::ln_choose;

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

/// ln(1 - exp(-y)) for y > 0.
#[inline]
fn ln_one_minus_exp_neg(y: f64) -> f64 {
    if y > 0.693 {
        (-(-y).exp()).ln_1p()
    } else {
        (-(-y).exp_m1()).ln()
    }
}

/// Unnormalized log posterior of the large-P model at natural-scale values.
///
/// The density is with respect to the cloglog-scale latent coordinates
/// (so the random-effect terms are plain normal densities) and the natural
/// global parameters. Returns `-inf` off the support: rates outside (0,1),
/// phi outside [1, 1+gamma] (or != 1 where testing is known random),
/// non-positive scale parameters.
pub fn log_density_large_p(
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

    // support checks
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
                .map(|(c, x)| c * x)
                .sum::<f64>();
        let m2 = params.theta
            + params
                .theta_coefs
                .iter()
                .zip(&g.ifr_covariates)
                .map(|(c, z)| c * z)
                .sum::<f64>();

        let (ifr, kappa2) = if prior.fixed_effects {
            (icloglog(m2), None)
        } else {
            if !(l.ifr > 0.0 && l.ifr < 1.0) {
                return f64::NEG_INFINITY;
            }
            (l.ifr, Some((-(-l.ifr).ln_1p()).ln()))
        };

        // CC_k ~ Binom(T_k, 1 - (1 - IR)^phi)
        let positivity = -(l.phi * (-l.ir).ln_1p()).exp_m1();
        lp += binomial_ln_pmf(g.confirmed, g.tests, positivity);
        // D_k ~ Binom(P_k, IFR * IR)
        lp += binomial_ln_pmf(g.deaths, g.population, ifr * l.ir);

        // random effects on the cloglog scale
        let kappa1 = (-(-l.ir).ln_1p()).ln();
        lp += normal_ln_pdf(kappa1, m1, params.sigma);
        if let Some(kappa2) = kappa2 {
            lp += normal_ln_pdf(kappa2, m2, params.tau);
        }
        // phi_k | gamma ~ Uniform(1, 1 + gamma)
        if !g.phi_known_one {
            lp -= params.gamma.ln();
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
    }

    // hyperpriors: uniform on icloglog(theta) and icloglog(beta), expressed
    // as densities in theta and beta
    lp += params.theta - params.theta.exp();
    lp += params.beta - params.beta.exp();
    lp += half_normal_ln_pdf(params.sigma, 1.0);
    if !prior.fixed_effects {
        lp += half_normal_ln_pdf(params.tau, prior.eta);
    }
    if any_unknown {
        lp += exponential_ln_pdf(params.gamma, prior.lambda);
    }
    for c in params.theta_coefs.iter().chain(&params.beta_coefs) {
        lp += normal_ln_pdf(*c, 0.0, prior.coef_sd);
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

/// Exact and first-order log odds ratio between testing and infection
/// status implied by the large-P positivity parameterization.
///
/// Returns `(log_or, c_ir)` where the exact value is
/// `log(1-(1-IR)^phi) - phi log(1-IR) - log(IR) + log(1-IR)` and the Taylor
/// approximation in `log(phi)` is `log_or ~= c_ir * log(phi)` with
/// `c_ir = -log(1-IR)/IR` (tending to 1 as IR tends to 0).
pub fn odds_ratio_approx(phi: f64, ir: f64) -> Result<(f64, f64)> {
    if !(phi > 0.0) {
        return Err(crate::error::Error::Domain(format!(
            "phi must be positive, got {phi}"
        )));
    }
    if !(ir > 0.0 && ir < 1.0) {
        return Err(crate::error::Error::Domain(format!(
            "ir must be in (0,1), got {ir}"
        )));
    }
    let ln_1m_ir = (-ir).ln_1p();
    let log_or = ln_one_minus_exp_neg(-phi * ln_1m_ir) - phi * ln_1m_ir - ir.ln() + ln_1m_ir;
    let c_ir = -ln_1m_ir / ir;
    Ok((log_or, c_ir))
}

/// Index layout of the unconstrained sampler coordinates.
#[derive(Debug, Clone)]
struct Layout {
    t_theta: usize,
    t_beta: usize,
    log_sigma: usize,
    log_tau: Option<usize>,
    log_gamma: Option<usize>,
    theta_coefs: std::ops::Range<usize>,
    beta_coefs: std::ops::Range<usize>,
    kappa1: Vec<usize>,
    kappa2: Vec<Option<usize>>,
    u: Vec<Option<usize>>,
    dim: usize,
}

/// The large-P posterior as a sampler target on unconstrained coordinates:
/// `logit(icloglog(theta))`, `logit(icloglog(beta))`, `log(sigma)`,
/// `log(tau)`, `log(gamma)`, raw coefficients, per-group `kappa1`, `kappa2`,
/// and `logit((phi-1)/gamma)`, with the matching Jacobian corrections.
pub struct LargeModel {
    groups: Vec<GroupObservation>,
    prior: PriorConfig,
    layout: Layout,
    /// per-group ln C(T, CC)
    ln_choose_cc: Vec<f64>,
    /// per-group ln C(P, D)
    ln_choose_d: Vec<f64>,
}

impl LargeModel {
    pub fn new(groups: Vec<GroupObservation>, prior: PriorConfig) -> Result<Self> {
        for g in &groups {
            g.validate()?;
        }
        prior.validate()?;
        let (h, q) = covariate_dims(&groups)?;
        let n = groups.len();
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
        let theta_coefs = next..next + q;
        next += q;
        let beta_coefs = next..next + h;
        next += h;
        let mut kappa1 = Vec::with_capacity(n);
        let mut kappa2 = Vec::with_capacity(n);
        let mut u = Vec::with_capacity(n);
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
        }
        let layout = Layout {
            t_theta,
            t_beta,
            log_sigma,
            log_tau,
            log_gamma,
            theta_coefs,
            beta_coefs,
            kappa1,
            kappa2,
            u,
            dim: next,
        };
        let ln_choose_cc = groups.iter().map(|g| ln_choose(g.tests, g.confirmed)).collect();
        let ln_choose_d = groups.iter().map(|g| ln_choose(g.population, g.deaths)).collect();
        Ok(Self {
            groups,
            prior,
            layout,
            ln_choose_cc,
            ln_choose_d,
        })
    }

    pub fn groups(&self) -> &[GroupObservation] {
        &self.groups
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    fn gamma_of(&self, v: &[f64]) -> f64 {
        self.layout.log_gamma.map_or(0.0, |i| v[i].exp())
    }

    /// Natural-scale parameters and latent states encoded by `v`.
    pub fn decode(&self, v: &[f64]) -> (GlobalParameters, Vec<LatentState>) {
        let l = &self.layout;
        let theta = softplus(v[l.t_theta]).ln();
        let beta = softplus(v[l.t_beta]).ln();
        let sigma = v[l.log_sigma].exp();
        let tau = l.log_tau.map_or(0.0, |i| v[i].exp());
        let gamma = self.gamma_of(v);
        let theta_coefs: Vec<f64> = v[l.theta_coefs.clone()].to_vec();
        let beta_coefs: Vec<f64> = v[l.beta_coefs.clone()].to_vec();
        let latents = self
            .groups
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let ir = icloglog(v[l.kappa1[k]]);
                let ifr = match l.kappa2[k] {
                    Some(i) => icloglog(v[i]),
                    None => {
                        let m2 = theta
                            + theta_coefs
                                .iter()
                                .zip(&g.ifr_covariates)
                                .map(|(c, z)| c * z)
                                .sum::<f64>();
                        icloglog(m2)
                    }
                };
                let phi = match l.u[k] {
                    Some(i) => 1.0 + gamma * sigmoid(v[i]),
                    None => 1.0,
                };
                LatentState {
                    c: None,
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
                theta_coefs,
                beta_coefs,
            },
            latents,
        )
    }

    /// Sum of the log Jacobians of the coordinate transforms, the bridge
    /// between [`log_density_large_p`] and the sampler-space density.
    pub fn log_jacobian(&self, v: &[f64]) -> f64 {
        let l = &self.layout;
        let mut jac = 0.0;
        // d theta / d t = s / softplus(t)
        for &t_idx in &[l.t_theta, l.t_beta] {
            let t = v[t_idx];
            let s = sigmoid(t);
            jac += (s / softplus(t)).ln();
        }
        jac += v[l.log_sigma]; // d sigma / d log sigma = sigma
        if let Some(i) = l.log_tau {
            jac += v[i];
        }
        if let Some(i) = l.log_gamma {
            jac += v[i];
        }
        let gamma = self.gamma_of(v);
        for u in self.layout.u.iter().flatten() {
            let s = sigmoid(v[*u]);
            jac += (gamma * s * (1.0 - s)).ln();
        }
        jac
    }

    /// Log density and its gradient with respect to every coordinate.
    pub fn log_density_grad(&self, v: &[f64]) -> (f64, Vec<f64>) {
        self.eval(v, true)
    }

    fn eval(&self, v: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let l = &self.layout;
        let mut grad = if want_grad { vec![0.0; l.dim] } else { Vec::new() };

        let t_theta = v[l.t_theta];
        let t_beta = v[l.t_beta];
        let s_theta = sigmoid(t_theta);
        let s_beta = sigmoid(t_beta);
        let w_theta = softplus(t_theta); // e^theta
        let w_beta = softplus(t_beta);
        let theta = w_theta.ln();
        let beta = w_beta.ln();
        let sigma = v[l.log_sigma].exp();
        let tau = l.log_tau.map_or(0.0, |i| v[i].exp());
        let gamma = self.gamma_of(v);
        let dtheta_dt = s_theta / w_theta;
        let dbeta_dt = s_beta / w_beta;

        let mut lp = 0.0;
        // logistic densities for the uniform-on-(0,1) hyperpriors
        lp += s_theta.ln() + (-s_theta).ln_1p();
        lp += s_beta.ln() + (-s_beta).ln_1p();
        // half-normal priors plus log-scale Jacobians
        lp += half_normal_ln_pdf(sigma, 1.0) + v[l.log_sigma];
        if let Some(i) = l.log_tau {
            lp += half_normal_ln_pdf(tau, self.prior.eta) + v[i];
        }
        if let Some(i) = l.log_gamma {
            lp += exponential_ln_pdf(gamma, self.prior.lambda) + v[i];
        }
        for idx in l.theta_coefs.clone().chain(l.beta_coefs.clone()) {
            lp += normal_ln_pdf(v[idx], 0.0, self.prior.coef_sd);
        }

        if want_grad {
            grad[l.t_theta] += 1.0 - 2.0 * s_theta;
            grad[l.t_beta] += 1.0 - 2.0 * s_beta;
            grad[l.log_sigma] += 1.0 - sigma * sigma;
            if let Some(i) = l.log_tau {
                grad[i] += 1.0 - (tau / self.prior.eta).powi(2);
            }
            if let Some(i) = l.log_gamma {
                grad[i] += 1.0 - self.prior.lambda * gamma;
            }
            let inv_coef_var = 1.0 / (self.prior.coef_sd * self.prior.coef_sd);
            for idx in l.theta_coefs.clone().chain(l.beta_coefs.clone()) {
                grad[idx] -= v[idx] * inv_coef_var;
            }
        }

        for (k, g) in self.groups.iter().enumerate() {
            let kappa1 = v[l.kappa1[k]];
            let a = kappa1.exp();
            let ir = -(-a).exp_m1();

            let m1 = beta
                + l.beta_coefs
                    .clone()
                    .zip(&g.ir_covariates)
                    .map(|(idx, x)| v[idx] * x)
                    .sum::<f64>();
            let m2 = theta
                + l.theta_coefs
                    .clone()
                    .zip(&g.ifr_covariates)
                    .map(|(idx, z)| v[idx] * z)
                    .sum::<f64>();

            let b = match l.kappa2[k] {
                Some(i) => v[i].exp(),
                None => m2.exp(),
            };
            let ifr = -(-b).exp_m1();

            let (phi, s_u) = match l.u[k] {
                Some(i) => {
                    let s = sigmoid(v[i]);
                    (1.0 + gamma * s, s)
                }
                None => (1.0, 0.0),
            };

            // CC ~ Binom(T, 1 - exp(-phi a))
            let phi_a = phi * a;
            let cc = g.confirmed as f64;
            let t_minus_cc = (g.tests - g.confirmed) as f64;
            let mut g_cc = 0.0;
            if g.tests > 0 {
                let ln_pos = ln_one_minus_exp_neg(phi_a);
                lp += self.ln_choose_cc[k] + cc * ln_pos - t_minus_cc * phi_a;
                if want_grad {
                    // d/d(phi a) of the CC log likelihood
                    g_cc = cc * (-phi_a).exp() / (-(-phi_a).exp_m1()) - t_minus_cc;
                }
            }

            // D ~ Binom(P, IFR * IR)
            let qq = ifr * ir;
            let d = g.deaths as f64;
            let p_minus_d = (g.population - g.deaths) as f64;
            lp += self.ln_choose_d[k] + d * qq.ln() + p_minus_d * (-qq).ln_1p();
            let g_d = if want_grad {
                (if g.deaths > 0 { d / qq } else { 0.0 }) - p_minus_d / (1.0 - qq)
            } else {
                0.0
            };

            // random effects
            let z1 = (kappa1 - m1) / sigma;
            lp += -0.5 * z1 * z1 - sigma.ln() - 0.918_938_533_204_672_7;
            if let Some(i2) = l.kappa2[k] {
                let z2 = (v[i2] - m2) / tau;
                lp += -0.5 * z2 * z2 - tau.ln() - 0.918_938_533_204_672_7;
            }
            // uniform phi prior in the logit coordinate is logistic
            if let Some(i) = l.u[k] {
                lp += s_u.ln() + (-s_u).ln_1p();
                let _ = i;
            }

            if !lp.is_finite() {
                return (f64::NEG_INFINITY, grad);
            }

            if want_grad {
                let dir_da = (-a).exp(); // d IR / d a
                let difr_db = (-b).exp();
                // kappa1: CC term, death term, RE prior
                grad[l.kappa1[k]] +=
                    g_cc * phi * a + g_d * ifr * dir_da * a - (kappa1 - m1) / (sigma * sigma);
                // kappa2 or its fixed-effects pathway into theta and coefs
                match l.kappa2[k] {
                    Some(i2) => {
                        let resid2 = (v[i2] - m2) / (tau * tau);
                        grad[i2] += g_d * ir * difr_db * b - resid2;
                        grad[l.t_theta] += resid2 * dtheta_dt;
                        for (idx, z) in l.theta_coefs.clone().zip(&g.ifr_covariates) {
                            grad[idx] += resid2 * z;
                        }
                        if let Some(it) = l.log_tau {
                            grad[it] += (v[i2] - m2) * (v[i2] - m2) / (tau * tau) - 1.0;
                        }
                    }
                    None => {
                        let dd = g_d * ir * difr_db * b;
                        grad[l.t_theta] += dd * dtheta_dt;
                        for (idx, z) in l.theta_coefs.clone().zip(&g.ifr_covariates) {
                            grad[idx] += dd * z;
                        }
                    }
                }
                // IR random-effect residual into beta and coefs
                let resid1 = (kappa1 - m1) / (sigma * sigma);
                grad[l.t_beta] += resid1 * dbeta_dt;
                for (idx, x) in l.beta_coefs.clone().zip(&g.ir_covariates) {
                    grad[idx] += resid1 * x;
                }
                grad[l.log_sigma] += (kappa1 - m1) * (kappa1 - m1) / (sigma * sigma) - 1.0;
                // phi pathways
                if let Some(i) = l.u[k] {
                    grad[i] += 1.0 - 2.0 * s_u + g_cc * a * gamma * s_u * (1.0 - s_u);
                    if let Some(ig) = l.log_gamma {
                        grad[ig] += g_cc * a * gamma * s_u;
                    }
                }
            }
        }

        if lp.is_nan() {
            lp = f64::NEG_INFINITY;
        }
        (lp, grad)
    }
}

impl Target for LargeModel {
    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn coord_names(&self) -> Vec<String> {
        let l = &self.layout;
        let mut names = vec![String::new(); l.dim];
        names[l.t_theta] = "t_theta".into();
        names[l.t_beta] = "t_beta".into();
        names[l.log_sigma] = "log_sigma".into();
        if let Some(i) = l.log_tau {
            names[i] = "log_tau".into();
        }
        if let Some(i) = l.log_gamma {
            names[i] = "log_gamma".into();
        }
        for (j, idx) in l.theta_coefs.clone().enumerate() {
            names[idx] = format!("theta_coef_{}", j + 1);
        }
        for (j, idx) in l.beta_coefs.clone().enumerate() {
            names[idx] = format!("beta_coef_{}", j + 1);
        }
        for k in 0..self.groups.len() {
            names[l.kappa1[k]] = format!("kappa_ir[{k}]");
            if let Some(i) = l.kappa2[k] {
                names[i] = format!("kappa_ifr[{k}]");
            }
            if let Some(i) = l.u[k] {
                names[i] = format!("phi_u[{k}]");
            }
        }
        names
    }

    fn coord_kinds(&self) -> Vec<CoordKind> {
        vec![CoordKind::Continuous; self.layout.dim]
    }

    fn log_density(&self, v: &[f64]) -> f64 {
        self.eval(v, false).0
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let l = &self.layout;
        let mut v = vec![0.0; l.dim];
        let clip = |p: f64| {
            let p = if p.is_finite() { p } else { 0.5 };
            p.clamp(1e-6, 1.0 - 1e-6)
        };
        let crude_cloglog = |num: u64, den: u64| {
            let rate = if den > 0 { num as f64 / den as f64 } else { 0.5 };
            (-(-clip(rate)).ln_1p()).ln()
        };
        let mut kappa1_sum = 0.0;
        let mut kappa2_sum = 0.0;
        for (k, g) in self.groups.iter().enumerate() {
            let k1 = crude_cloglog(g.confirmed, g.tests);
            let k2 = crude_cloglog(g.deaths, g.population);
            kappa1_sum += k1;
            kappa2_sum += k2;
            let jitter: f64 = rng.sample(StandardNormal);
            v[l.kappa1[k]] = k1 + 0.05 * jitter;
            if let Some(i) = l.kappa2[k] {
                let jitter: f64 = rng.sample(StandardNormal);
                v[i] = k2 + 0.05 * jitter;
            }
            if let Some(i) = l.u[k] {
                // midpoint of [1, 1 + gamma0]
                v[i] = 0.0 + 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let n = self.groups.len() as f64;
        let mean_k2 = kappa2_sum / n;
        let mean_k1 = kappa1_sum / n;
        // t = logit(icloglog(theta))
        let to_t = |cl: f64| {
            let s = icloglog(cl).clamp(1e-9, 1.0 - 1e-9);
            (s / (1.0 - s)).ln()
        };
        v[l.t_theta] = to_t(mean_k2) + 0.1 * rng.sample::<f64, _>(StandardNormal);
        v[l.t_beta] = to_t(mean_k1) + 0.1 * rng.sample::<f64, _>(StandardNormal);
        v[l.log_sigma] = 0.5_f64.ln() + 0.1 * rng.sample::<f64, _>(StandardNormal);
        if let Some(i) = l.log_tau {
            v[i] = self.prior.eta.ln() + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        if let Some(i) = l.log_gamma {
            let gamma0 = 1.0 / self.prior.lambda;
            v[i] = gamma0.ln() + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        for idx in l.theta_coefs.clone().chain(l.beta_coefs.clone()) {
            v[idx] = 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
        v
    }

    fn group_coords(&self) -> Vec<GroupCoords> {
        let l = &self.layout;
        (0..self.groups.len())
            .map(|k| GroupCoords {
                phi: l.u[k],
                kappa_ir: l.kappa1[k],
                kappa_ifr: l.kappa2[k],
            })
            .collect()
    }

    fn phi_view(&self, v: &[f64], k: usize) -> Option<PhiView> {
        let i = self.layout.u[k]?;
        let gamma = self.gamma_of(v);
        let s = sigmoid(v[i]);
        Some(PhiView {
            phi: 1.0 + gamma * s,
            dphi_dcoord: gamma * s * (1.0 - s),
        })
    }

    fn phi_coord_from(&self, v: &[f64], k: usize, phi: f64) -> Option<f64> {
        self.layout.u[k]?;
        let gamma = self.gamma_of(v);
        let frac = (phi - 1.0) / gamma;
        if !(frac > 0.0 && frac < 1.0) {
            return None;
        }
        Some((frac / (1.0 - frac)).ln())
    }

    fn bound_coord(&self) -> Option<usize> {
        self.layout.log_gamma
    }

    fn tracked_names(&self) -> Vec<String> {
        let l = &self.layout;
        let mut names = vec![
            "theta".to_string(),
            "beta".to_string(),
            "sigma".to_string(),
            "ifr_overall".to_string(),
            "ir_overall".to_string(),
        ];
        if l.log_tau.is_some() {
            names.push("tau".into());
        }
        if l.log_gamma.is_some() {
            names.push("gamma".into());
        }
        for j in 0..l.theta_coefs.len() {
            names.push(format!("theta_coef_{}", j + 1));
        }
        for j in 0..l.beta_coefs.len() {
            names.push(format!("beta_coef_{}", j + 1));
        }
        for k in 0..self.groups.len() {
            names.push(format!("ir[{k}]"));
            names.push(format!("ifr[{k}]"));
            if l.u[k].is_some() {
                names.push(format!("phi[{k}]"));
            }
        }
        names
    }

    fn tracked(&self, v: &[f64]) -> Vec<f64> {
        let (params, latents) = self.decode(v);
        let l = &self.layout;
        let mut out = vec![
            params.theta,
            params.beta,
            params.sigma,
            icloglog(params.theta),
            icloglog(params.beta),
        ];
        if l.log_tau.is_some() {
            out.push(params.tau);
        }
        if l.log_gamma.is_some() {
            out.push(params.gamma);
        }
        out.extend(&params.theta_coefs);
        out.extend(&params.beta_coefs);
        for (k, lat) in latents.iter().enumerate() {
            out.push(lat.ir);
            out.push(lat.ifr);
            if l.u[k].is_some() {
                out.push(lat.phi);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::substream;

    fn toy_groups() -> Vec<GroupObservation> {
        vec![
            GroupObservation::new("a", 2_000_000, 40_000, 9_000, 450, true).unwrap(),
            GroupObservation::new("b", 5_000_000, 60_000, 30_000, 1_400, false).unwrap(),
        ]
    }

    fn toy_latents() -> Vec<LatentState> {
        vec![
            LatentState { c: None, ir: 0.2, ifr: 0.01, phi: 1.0 },
            LatentState { c: None, ir: 0.25, ifr: 0.012, phi: 3.0 },
        ]
    }

    fn toy_params() -> GlobalParameters {
        GlobalParameters {
            theta: -4.5,
            tau: 0.1,
            beta: -1.5,
            sigma: 0.5,
            gamma: 8.0,
            theta_coefs: vec![],
            beta_coefs: vec![],
        }
    }

    #[test]
    fn support_violations_give_neg_inf() {
        let groups = toy_groups();
        let prior = PriorConfig::default();
        let mut latents = toy_latents();
        let params = toy_params();
        assert!(log_density_large_p(&groups, &latents, &params, &prior).is_finite());

        latents[1].phi = 9.5; // above 1 + gamma
        assert_eq!(
            log_density_large_p(&groups, &latents, &params, &prior),
            f64::NEG_INFINITY
        );
        let mut latents = toy_latents();
        latents[0].phi = 2.0; // known-one group must stay at 1
        assert_eq!(
            log_density_large_p(&groups, &latents, &params, &prior),
            f64::NEG_INFINITY
        );
        let mut latents = toy_latents();
        latents[0].ir = 1.5;
        assert_eq!(
            log_density_large_p(&groups, &latents, &params, &prior),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn phi_one_reduces_to_plain_binomial() {
        // with all phi = 1 the CC likelihood is Binom(T, IR)
        let groups = vec![GroupObservation::new("a", 1_000_000, 10_000, 2_000, 100, true).unwrap()];
        let latents = vec![LatentState { c: None, ir: 0.2, ifr: 0.005, phi: 1.0 }];
        let params = GlobalParameters {
            theta: -5.0,
            tau: 0.1,
            beta: -1.5,
            sigma: 0.5,
            gamma: 0.0,
            theta_coefs: vec![],
            beta_coefs: vec![],
        };
        let prior = PriorConfig::default();
        let full = log_density_large_p(&groups, &latents, &params, &prior);
        // subtract everything except the CC term to isolate it
        let cc_term = binomial_ln_pmf(2_000, 10_000, 0.2);
        let rest = full - cc_term;
        // recompute with a slightly different IR only in the CC term is not
        // possible through the public surface, so check the identity instead:
        let positivity = -(1.0 * (-0.2_f64).ln_1p()).exp_m1();
        assert!((positivity - 0.2).abs() < 1e-15);
        assert!(rest.is_finite());
    }

    #[test]
    fn covariates_at_zero_match_no_covariate_density() {
        let mut groups = toy_groups();
        for g in &mut groups {
            g.ir_covariates = vec![0.0, 0.0];
            g.ifr_covariates = vec![0.0];
        }
        let latents = toy_latents();
        let mut params = toy_params();
        params.theta_coefs = vec![0.7];
        params.beta_coefs = vec![-0.3, 0.2];
        let prior = PriorConfig::default();
        let with_cov = log_density_large_p(&groups, &latents, &params, &prior);

        let plain_groups = toy_groups();
        let mut plain_params = toy_params();
        plain_params.theta_coefs = vec![];
        plain_params.beta_coefs = vec![];
        let plain = log_density_large_p(&plain_groups, &latents, &plain_params, &prior);
        // densities differ only by the coefficient priors
        let coef_priors = normal_ln_pdf(0.7, 0.0, 1.0)
            + normal_ln_pdf(-0.3, 0.0, 1.0)
            + normal_ln_pdf(0.2, 0.0, 1.0);
        assert!((with_cov - plain - coef_priors).abs() < 1e-10);
    }

    #[test]
    fn sampler_density_bridges_to_natural_op() {
        let mut groups = toy_groups();
        for g in &mut groups {
            g.ir_covariates = vec![0.4, -1.0];
            g.ifr_covariates = vec![0.25];
        }
        let model = LargeModel::new(groups.clone(), PriorConfig::default()).unwrap();
        let mut rng = substream(77, &[1]);
        for _ in 0..20 {
            let v = model.initial_state(&mut rng);
            let direct = model.log_density(&v);
            let (params, latents) = model.decode(&v);
            let natural = log_density_large_p(&groups, &latents, &params, &PriorConfig::default());
            let bridged = natural + model.log_jacobian(&v);
            assert!(
                (direct - bridged).abs() < 1e-8,
                "direct {direct} vs bridged {bridged}"
            );
        }
    }

    #[test]
    fn density_invariant_under_group_permutation() {
        let groups = toy_groups();
        let latents = toy_latents();
        let params = toy_params();
        let prior = PriorConfig::default();
        let fwd = log_density_large_p(&groups, &latents, &params, &prior);
        let rev_groups: Vec<_> = groups.iter().rev().cloned().collect();
        let rev_latents: Vec<_> = latents.iter().rev().copied().collect();
        let rev = log_density_large_p(&rev_groups, &rev_latents, &params, &prior);
        assert!((fwd - rev).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // moderate counts keep the density magnitude small enough that
        // central differences are not dominated by cancellation noise
        let mut groups = vec![
            GroupObservation::new("a", 30_000, 900, 210, 9, true).unwrap(),
            GroupObservation::new("b", 80_000, 1_500, 700, 30, false).unwrap(),
        ];
        for g in &mut groups {
            g.ir_covariates = vec![0.4];
            g.ifr_covariates = vec![0.25, -0.6];
        }
        let model = LargeModel::new(groups, PriorConfig::default()).unwrap();
        let mut rng = substream(123, &[2]);
        for trial in 0..20 {
            let v = model.initial_state(&mut rng);
            let (_, grad) = model.log_density_grad(&v);
            for j in 0..model.dim() {
                let h = 1e-5;
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[j] += h;
                vm[j] -= h;
                let fd = (model.log_density(&vp) - model.log_density(&vm)) / (2.0 * h);
                let scale = grad[j].abs().max(fd.abs()).max(1e-4);
                assert!(
                    (grad[j] - fd).abs() / scale < 1e-4,
                    "trial {trial}, coord {j}: analytic {} vs fd {fd}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn odds_ratio_limits() {
        // phi = 1 gives log OR = 0
        let (lo, _) = odds_ratio_approx(1.0, 0.3).unwrap();
        assert!(lo.abs() < 1e-12);
        // c_ir -> 1 as ir -> 0
        let (_, c) = odds_ratio_approx(2.0, 1e-9).unwrap();
        assert!((c - 1.0).abs() < 1e-6);
        // direct evaluation at ir = 0.5
        let (_, c) = odds_ratio_approx(2.0, 0.5).unwrap();
        assert!((c - 1.3863).abs() < 1e-4);
        // taylor approximation tightens as phi -> 1
        let ir = 0.2;
        let (exact_far, c_ir) = odds_ratio_approx(3.0, ir).unwrap();
        let rel_far = ((exact_far - c_ir * 3.0_f64.ln()) / exact_far).abs();
        let (exact_near, _) = odds_ratio_approx(1.05, ir).unwrap();
        let rel_near = ((exact_near - c_ir * 1.05_f64.ln()) / exact_near).abs();
        assert!(rel_near < rel_far);
        assert!(rel_near < 0.02);
    }

    #[test]
    fn fixed_effects_drops_kappa2() {
        let groups = toy_groups();
        let prior = PriorConfig {
            fixed_effects: true,
            ..PriorConfig::default()
        };
        let model = LargeModel::new(groups, prior).unwrap();
        // dim: t_theta, t_beta, log_sigma, log_gamma, kappa1 x2, u x1
        assert_eq!(model.dim(), 7);
        let mut rng = substream(5, &[3]);
        let v = model.initial_state(&mut rng);
        assert!(model.log_density(&v).is_finite());
    }
}
