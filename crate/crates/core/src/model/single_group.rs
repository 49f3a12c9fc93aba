//! The two-parameter single-group model used to read an IFR off one
//! seroprevalence study:
//!
//! ```text
//! CC ~ Binom(T, IR),  D ~ Binom(P, IFR * IR),  IFR, IR ~ Uniform(0, 1)
//! ```

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::PosteriorSummary;
use crate::error::{Error, Result};
use crate::sampler::{run_chains, ChainConfig, ChainResult, GroupCoords, Target};
use crate::special::ln_choose;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The single-group posterior on (logit IFR, logit IR).
pub struct SingleGroupModel {
    confirmed: u64,
    tests: u64,
    deaths: u64,
    population: u64,
    ln_choose_cc: f64,
    ln_choose_d: f64,
}

impl SingleGroupModel {
    pub fn new(confirmed: u64, tests: u64, deaths: u64, population: u64) -> Result<Self> {
        if confirmed > tests {
            return Err(Error::InvalidParameter(format!(
                "confirmed ({confirmed}) exceeds tests ({tests})"
            )));
        }
        if deaths > population {
            return Err(Error::InvalidParameter(format!(
                "deaths ({deaths}) exceed population ({population})"
            )));
        }
        Ok(Self {
            confirmed,
            tests,
            deaths,
            population,
            ln_choose_cc: ln_choose(tests, confirmed),
            ln_choose_d: ln_choose(population, deaths),
        })
    }
}

impl Target for SingleGroupModel {
    fn dim(&self) -> usize {
        2
    }

    fn coord_names(&self) -> Vec<String> {
        vec!["logit_ifr".into(), "logit_ir".into()]
    }

    fn log_density(&self, v: &[f64]) -> f64 {
        let ifr = sigmoid(v[0]);
        let ir = sigmoid(v[1]);
        let q = ifr * ir;
        let mut lp = 0.0;
        if self.tests > 0 {
            lp += self.ln_choose_cc
                + self.confirmed as f64 * ir.ln()
                + (self.tests - self.confirmed) as f64 * (-ir).ln_1p();
        }
        lp += self.ln_choose_d
            + self.deaths as f64 * q.ln()
            + (self.population - self.deaths) as f64 * (-q).ln_1p();
        // uniform priors on (0,1) become logistic densities in the logits
        lp += v[0] - 2.0 * softplus_raw(v[0]);
        lp += v[1] - 2.0 * softplus_raw(v[1]);
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let crude_ir = if self.tests > 0 {
            (self.confirmed as f64 / self.tests as f64).clamp(1e-4, 1.0 - 1e-4)
        } else {
            0.1
        };
        let crude_death_rate =
            (self.deaths as f64 / self.population as f64).clamp(1e-8, 1.0 - 1e-4);
        let crude_ifr = (crude_death_rate / crude_ir).clamp(1e-6, 0.5);
        let logit = |p: f64| (p / (1.0 - p)).ln();
        vec![
            logit(crude_ifr) + 0.2 * rng.sample::<f64, _>(StandardNormal),
            logit(crude_ir) + 0.2 * rng.sample::<f64, _>(StandardNormal),
        ]
    }

    fn group_coords(&self) -> Vec<GroupCoords> {
        // one "group": a joint block over both coordinates helps the ridge
        vec![GroupCoords {
            phi: None,
            kappa_ir: 1,
            kappa_ifr: Some(0),
        }]
    }

    fn tracked_names(&self) -> Vec<String> {
        vec!["ifr".into(), "ir".into()]
    }

    fn tracked(&self, v: &[f64]) -> Vec<f64> {
        vec![sigmoid(v[0]), sigmoid(v[1])]
    }
}

#[inline]
fn softplus_raw(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Result of a single-group fit.
#[derive(Debug, Clone)]
pub struct SingleGroupFit {
    /// Posterior summary of the IFR (95% HPD by default).
    pub ifr: PosteriorSummary,
    /// Posterior summary of the IR.
    pub ir: PosteriorSummary,
    /// Full chain output.
    pub result: ChainResult,
}

/// Fit the single-group model and summarize the IFR posterior.
///
/// Errors with [`Error::McmcNonConvergence`] when the restart protocol runs
/// out of attempts.
pub fn single_group_ifr(
    confirmed: u64,
    tests: u64,
    deaths: u64,
    population: u64,
    config: &ChainConfig,
) -> Result<SingleGroupFit> {
    let model = SingleGroupModel::new(confirmed, tests, deaths, population)?;
    let result = run_chains(&model, config)?;
    if !result.converged {
        return Err(Error::McmcNonConvergence {
            rhat: result.max_rhat(),
            restarts: result.n_restarts,
        });
    }
    let summaries = result.summaries(0.95)?;
    Ok(SingleGroupFit {
        ifr: summaries[0].clone(),
        ir: summaries[1].clone(),
        result,
    })
}
