//! Domain types shared by the small-P and large-P models.

use serde::Serialize;

use crate::error::{Error, Result};

/// One jurisdiction's observed counts and covariates.
#[derive(Debug, Clone, Serialize)]
pub struct GroupObservation {
    pub label: String,
    /// Population size P.
    pub population: u64,
    /// People tested T.
    pub tests: u64,
    /// Confirmed cases CC.
    pub confirmed: u64,
    /// Deaths D.
    pub deaths: u64,
    /// True when testing is known to be random (phi = 1).
    pub phi_known_one: bool,
    /// Covariates explaining the infection rate (X row).
    pub ir_covariates: Vec<f64>,
    /// Covariates explaining the IFR (Z row).
    pub ifr_covariates: Vec<f64>,
}

impl GroupObservation {
    pub fn new(
        label: impl Into<String>,
        population: u64,
        tests: u64,
        confirmed: u64,
        deaths: u64,
        phi_known_one: bool,
    ) -> Result<Self> {
        let g = Self {
            label: label.into(),
            population,
            tests,
            confirmed,
            deaths,
            phi_known_one,
            ir_covariates: Vec::new(),
            ifr_covariates: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.confirmed > self.tests {
            return Err(Error::InvalidParameter(format!(
                "{}: confirmed ({}) exceeds tests ({})",
                self.label, self.confirmed, self.tests
            )));
        }
        if self.tests > self.population {
            return Err(Error::InvalidParameter(format!(
                "{}: tests ({}) exceed population ({})",
                self.label, self.tests, self.population
            )));
        }
        if self.deaths > self.population {
            return Err(Error::InvalidParameter(format!(
                "{}: deaths ({}) exceed population ({})",
                self.label, self.deaths, self.population
            )));
        }
        Ok(())
    }
}

/// Check that covariate vectors have uniform lengths across groups and
/// return (h, q) = (#IR covariates, #IFR covariates).
pub fn covariate_dims(groups: &[GroupObservation]) -> Result<(usize, usize)> {
    let h = groups.first().map_or(0, |g| g.ir_covariates.len());
    let q = groups.first().map_or(0, |g| g.ifr_covariates.len());
    for g in groups {
        if g.ir_covariates.len() != h || g.ifr_covariates.len() != q {
            return Err(Error::InvalidParameter(format!(
                "{}: covariate vector lengths differ across groups",
                g.label
            )));
        }
    }
    Ok((h, q))
}

/// Per-group unobserved quantities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatentState {
    /// Total cases C (used by the small-P model only).
    pub c: Option<u64>,
    /// Infection rate IR in (0,1).
    pub ir: f64,
    /// Infection fatality rate IFR in (0,1).
    pub ifr: f64,
    /// Preferential testing odds phi >= 1.
    pub phi: f64,
}

/// Hyperparameters of the hierarchical model.
#[derive(Debug, Clone, Serialize)]
pub struct GlobalParameters {
    /// Mean of cloglog(IFR).
    pub theta: f64,
    /// SD of cloglog(IFR) across groups.
    pub tau: f64,
    /// Mean of cloglog(IR).
    pub beta: f64,
    /// SD of cloglog(IR) across groups.
    pub sigma: f64,
    /// Upper bound of preferentiality minus one: phi in [1, 1 + gamma].
    pub gamma: f64,
    /// IFR covariate coefficients (length q).
    pub theta_coefs: Vec<f64>,
    /// IR covariate coefficients (length h).
    pub beta_coefs: Vec<f64>,
}

/// Prior configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PriorConfig {
    /// Rate of the exponential prior on gamma.
    pub lambda: f64,
    /// Scale of the half-normal prior on tau.
    pub eta: f64,
    /// SD of the normal priors on covariate coefficients.
    pub coef_sd: f64,
    /// Fixed-effects variant: tau = 0 and cloglog(IFR_k) = theta + Z theta.
    pub fixed_effects: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            eta: 0.1,
            coef_sd: 1.0,
            fixed_effects: false,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.eta > 0.0 && self.coef_sd > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda, eta, coef_sd must be positive, got ({}, {}, {})",
                self.lambda, self.eta, self.coef_sd
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_invariants() {
        assert!(GroupObservation::new("a", 100, 10, 5, 2, true).is_ok());
        assert!(GroupObservation::new("b", 100, 10, 11, 2, true).is_err());
        assert!(GroupObservation::new("c", 100, 101, 5, 2, true).is_err());
        assert!(GroupObservation::new("d", 100, 10, 5, 101, true).is_err());
    }

    #[test]
    fn covariate_uniformity() {
        let mut a = GroupObservation::new("a", 100, 10, 5, 2, true).unwrap();
        let mut b = GroupObservation::new("b", 100, 10, 5, 2, false).unwrap();
        a.ir_covariates = vec![0.1, 0.2];
        b.ir_covariates = vec![0.3, 0.4];
        assert_eq!(covariate_dims(&[a.clone(), b.clone()]).unwrap(), (2, 0));
        b.ir_covariates = vec![0.3];
        assert!(covariate_dims(&[a, b]).is_err());
    }
}
