//! Simulation study: generate datasets under known truth, fit the M1/M2/M3
//! variants over prior grids, and aggregate point estimates, coverage of the
//! 90% HPD interval, and interval widths with Monte Carlo standard errors.
//!
//! Each replicate owns deterministic substreams: a core stream draws
//! everything that is shared across the preferentiality scenarios
//! (populations, test counts, rates, cases, deaths, and the confirmed cases
//! of the known-random groups), and a per-gamma stream draws only the
//! unknown groups' phi values and their confirmed cases. The gamma variants
//! of one replicate therefore share a single underlying dataset.

use rand::{Rng, RngExt};
use rand_distr::{Binomial, Distribution, Gamma as GammaDist, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{nchg_sample, NchgParams};
use crate::error::Result;
use crate::link::{cloglog, icloglog};
use crate::model::{GroupObservation, LargeModel, PriorConfig};
use crate::sampler::{run_chains, ChainConfig};
use crate::streams::{mix, substream};

/// Design constants of the simulation study.
#[derive(Debug, Clone, Serialize)]
pub struct SimScenario {
    /// Number of groups K.
    pub k_total: usize,
    /// Leading groups with known-random testing (phi = 1).
    pub k_known: usize,
    /// Mean population of the known-random groups.
    pub pop_mean_small: f64,
    /// Mean population of the unknown-phi groups.
    pub pop_mean_large: f64,
    /// Negative-binomial dispersion (size) of the population draws.
    pub negbin_size: f64,
    /// True mean cloglog(IFR).
    pub theta_true: f64,
    /// True mean cloglog(IR).
    pub beta_true: f64,
    /// True variance of cloglog(IFR) across groups.
    pub tau2_true: f64,
    /// True variance of cloglog(IR) across groups.
    pub sigma2_true: f64,
    /// Testing rate range (uniform).
    pub test_rate_range: (f64, f64),
    /// Preferentiality upper-bound scenarios.
    pub gamma_grid: Vec<f64>,
    /// Exponential-rate prior settings for estimation.
    pub lambda_grid: Vec<f64>,
    /// Half-normal-scale prior settings for estimation.
    pub eta_grid: Vec<f64>,
    /// Replicates.
    pub n_reps: usize,
    /// Root seed.
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            k_total: 20,
            k_known: 8,
            pop_mean_small: 20_000.0,
            pop_mean_large: 200_000.0,
            negbin_size: 1.0,
            theta_true: cloglog(0.02).unwrap(),
            beta_true: cloglog(0.20).unwrap(),
            tau2_true: 0.005,
            sigma2_true: 0.25,
            test_rate_range: (0.01, 0.10),
            gamma_grid: vec![0.0, 0.5, 1.0, 2.0, 4.0, 12.0, 32.0, 64.0],
            lambda_grid: vec![0.05, 0.1, 0.5],
            eta_grid: vec![0.05, 0.1, 0.5],
            n_reps: 100,
            seed: 20200501,
        }
    }
}

impl SimScenario {
    /// The reduced grid used for desk-scale runs.
    pub fn desk_scale() -> Self {
        Self {
            gamma_grid: vec![0.0, 2.0, 12.0, 64.0],
            lambda_grid: vec![0.05, 0.5],
            eta_grid: vec![0.05, 0.5],
            n_reps: 100,
            ..Self::default()
        }
    }
}

/// Hidden truth behind one generated dataset variant.
#[derive(Debug, Clone, Serialize)]
pub struct SimTruth {
    pub gamma: f64,
    pub ir: Vec<f64>,
    pub ifr: Vec<f64>,
    pub cases: Vec<u64>,
    pub phi: Vec<f64>,
    /// Populations redrawn because a draw came back zero.
    pub zero_population_redraws: u32,
}

/// One generated dataset variant plus its truth record.
#[derive(Debug, Clone)]
pub struct SimDataset {
    pub groups: Vec<GroupObservation>,
    pub truth: SimTruth,
}

/// Negative binomial with mean `mean` and size (dispersion) `size`, drawn
/// as a gamma-mixed Poisson.
fn negbin_mean_size<R: Rng + ?Sized>(mean: f64, size: f64, rng: &mut R) -> u64 {
    let gamma = GammaDist::new(size, mean / size).expect("valid gamma");
    let lambda: f64 = gamma.sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
}

/// The parts of a replicate that are shared across gamma variants.
struct CoreDraw {
    population: Vec<u64>,
    tests: Vec<u64>,
    ir: Vec<f64>,
    ifr: Vec<f64>,
    cases: Vec<u64>,
    deaths: Vec<u64>,
    confirmed_known: Vec<u64>,
    redraws: u32,
}

const CORE_STREAM: u64 = 0xC0DE;
const VARIANT_STREAM: u64 = 0xFA_CE;

fn draw_core(scenario: &SimScenario, rep: usize) -> CoreDraw {
    let mut rng = substream(scenario.seed, &[CORE_STREAM, rep as u64]);
    let k = scenario.k_total;
    let mut population = Vec::with_capacity(k);
    let mut tests = Vec::with_capacity(k);
    let mut ir = Vec::with_capacity(k);
    let mut ifr = Vec::with_capacity(k);
    let mut cases = Vec::with_capacity(k);
    let mut deaths = Vec::with_capacity(k);
    let mut confirmed_known = Vec::with_capacity(scenario.k_known);
    let mut redraws = 0u32;
    let tau = scenario.tau2_true.sqrt();
    let sigma = scenario.sigma2_true.sqrt();
    for idx in 0..k {
        let mean = if idx < scenario.k_known {
            scenario.pop_mean_small
        } else {
            scenario.pop_mean_large
        };
        let mut p = negbin_mean_size(mean, scenario.negbin_size, &mut rng);
        while p == 0 {
            redraws += 1;
            p = negbin_mean_size(mean, scenario.negbin_size, &mut rng);
        }
        let rate = rng.random_range(scenario.test_rate_range.0..scenario.test_rate_range.1);
        let t = ((rate * p as f64).round() as u64).min(p);
        let ir_k = icloglog(scenario.beta_true + sigma * rng.sample::<f64, _>(StandardNormal));
        let ifr_k = icloglog(scenario.theta_true + tau * rng.sample::<f64, _>(StandardNormal));
        let c = Binomial::new(p, ir_k).expect("valid binomial").sample(&mut rng);
        let d = Binomial::new(c, ifr_k).expect("valid binomial").sample(&mut rng);
        if idx < scenario.k_known {
            // known-random testing: central hypergeometric draw
            let params = NchgParams {
                n_cases: c,
                n_noncases: p - c,
                n_draws: t,
                odds: 1.0,
            };
            confirmed_known.push(nchg_sample(&params, &mut rng));
        }
        population.push(p);
        tests.push(t);
        ir.push(ir_k);
        ifr.push(ifr_k);
        cases.push(c);
        deaths.push(d);
    }
    CoreDraw {
        population,
        tests,
        ir,
        ifr,
        cases,
        deaths,
        confirmed_known,
        redraws,
    }
}

/// Generate one dataset variant for a given preferentiality bound `gamma`.
///
/// Fixing `(scenario.seed, rep)` fixes everything shared across gamma
/// values; only the unknown groups' phi draws and confirmed cases differ.
pub fn generate_dataset(scenario: &SimScenario, gamma: f64, rep: usize) -> SimDataset {
    let core = draw_core(scenario, rep);
    let mut rng = substream(
        scenario.seed,
        &[VARIANT_STREAM, rep as u64, gamma.to_bits()],
    );
    let k = scenario.k_total;
    let mut groups = Vec::with_capacity(k);
    let mut phi_all = Vec::with_capacity(k);
    for idx in 0..k {
        let known = idx < scenario.k_known;
        let (phi, confirmed) = if known {
            (1.0, core.confirmed_known[idx])
        } else {
            let phi = if gamma > 0.0 {
                rng.random_range(1.0..1.0 + gamma)
            } else {
                1.0
            };
            let params = NchgParams {
                n_cases: core.cases[idx],
                n_noncases: core.population[idx] - core.cases[idx],
                n_draws: core.tests[idx],
                odds: phi,
            };
            (phi, nchg_sample(&params, &mut rng))
        };
        phi_all.push(phi);
        groups.push(GroupObservation {
            label: format!("group-{}", idx + 1),
            population: core.population[idx],
            tests: core.tests[idx],
            confirmed,
            deaths: core.deaths[idx],
            phi_known_one: known,
            ir_covariates: vec![],
            ifr_covariates: vec![],
        });
    }
    SimDataset {
        groups,
        truth: SimTruth {
            gamma,
            ir: core.ir,
            ifr: core.ifr,
            cases: core.cases,
            phi: phi_all,
            zero_population_redraws: core.redraws,
        },
    }
}

/// Which subset of the groups a fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelVariant {
    /// Only the unknown-phi groups.
    M1,
    /// All groups.
    M2,
    /// Only the known-random groups.
    M3,
}

impl ModelVariant {
    pub fn label(&self) -> &'static str {
        match self {
            ModelVariant::M1 => "M1",
            ModelVariant::M2 => "M2",
            ModelVariant::M3 => "M3",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            ModelVariant::M1 => 1,
            ModelVariant::M2 => 2,
            ModelVariant::M3 => 3,
        }
    }
}

/// One fit's record.
#[derive(Debug, Clone, Serialize)]
pub struct SimRecord {
    pub rep: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub eta: f64,
    pub model: ModelVariant,
    /// Posterior median of icloglog(theta).
    pub point_estimate: f64,
    /// Width of the 90% HPD interval for theta (cloglog scale).
    pub ci_width: f64,
    /// Whether that interval contains the true theta.
    pub covered: bool,
    pub converged: bool,
    pub n_restarts: u32,
}

/// Fit one model variant to a dataset variant.
///
/// M3 ignores the unknown-phi groups entirely, so its record depends on
/// neither `gamma` nor `lambda`; its chain seed is derived without them to
/// keep that exact.
pub fn fit_variant(
    scenario: &SimScenario,
    variant: ModelVariant,
    dataset: &SimDataset,
    rep: usize,
    lambda: f64,
    eta: f64,
    base_config: &ChainConfig,
) -> Result<SimRecord> {
    let groups: Vec<GroupObservation> = match variant {
        ModelVariant::M1 => dataset
            .groups
            .iter()
            .filter(|g| !g.phi_known_one)
            .cloned()
            .collect(),
        ModelVariant::M2 => dataset.groups.clone(),
        ModelVariant::M3 => dataset
            .groups
            .iter()
            .filter(|g| g.phi_known_one)
            .cloned()
            .collect(),
    };
    let prior = PriorConfig {
        lambda,
        eta,
        ..PriorConfig::default()
    };
    let seed_path: Vec<u64> = match variant {
        // gamma and lambda are inert for M3
        ModelVariant::M3 => vec![variant.tag(), rep as u64, eta.to_bits()],
        _ => vec![
            variant.tag(),
            rep as u64,
            dataset.truth.gamma.to_bits(),
            lambda.to_bits(),
            eta.to_bits(),
        ],
    };
    let config = ChainConfig {
        seed: mix(scenario.seed, &seed_path),
        ..base_config.clone()
    };
    let model = LargeModel::new(groups, prior)?;
    let result = run_chains(&model, &config)?;
    let theta_idx = result.column_index("theta").expect("theta tracked");
    let theta_draws = result.pooled(theta_idx);
    let (lo, hi) = crate::diagnostics::hpd_interval(&theta_draws, 0.90)?;
    let median_theta = crate::diagnostics::median(&theta_draws);
    Ok(SimRecord {
        rep,
        gamma: dataset.truth.gamma,
        lambda,
        eta,
        model: variant,
        point_estimate: icloglog(median_theta),
        ci_width: hi - lo,
        covered: lo <= scenario.theta_true && scenario.theta_true <= hi,
        converged: result.converged,
        n_restarts: result.n_restarts,
    })
}

/// Aggregated cell of the study.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub model: ModelVariant,
    pub gamma: f64,
    pub lambda: f64,
    pub eta: f64,
    /// Records in the cell.
    pub n: usize,
    /// Converged records (the others are discarded from the statistics).
    pub n_converged: usize,
    pub mean_estimate: Option<f64>,
    pub coverage: Option<f64>,
    /// Monte Carlo standard error sqrt(c(1-c)/n) of the coverage.
    pub coverage_mcse: Option<f64>,
    pub mean_ci_width: Option<f64>,
}

/// Aggregate records into per-(model, gamma, lambda, eta) cells.
///
/// Non-converged records count toward `n` but are excluded from the
/// statistics; a cell with no converged record reports `None`s.
pub fn aggregate(records: &[SimRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(ModelVariant, u64, u64, u64)> = Vec::new();
    for r in records {
        let key = (r.model, r.gamma.to_bits(), r.lambda.to_bits(), r.eta.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|&(model, gb, lb, eb)| {
            let cell: Vec<&SimRecord> = records
                .iter()
                .filter(|r| {
                    r.model == model
                        && r.gamma.to_bits() == gb
                        && r.lambda.to_bits() == lb
                        && r.eta.to_bits() == eb
                })
                .collect();
            let converged: Vec<&&SimRecord> = cell.iter().filter(|r| r.converged).collect();
            let nc = converged.len();
            let (mean_estimate, coverage, coverage_mcse, mean_ci_width) = if nc > 0 {
                let mean_est =
                    converged.iter().map(|r| r.point_estimate).sum::<f64>() / nc as f64;
                let cov = converged.iter().filter(|r| r.covered).count() as f64 / nc as f64;
                let mcse = (cov * (1.0 - cov) / nc as f64).sqrt();
                let width = converged.iter().map(|r| r.ci_width).sum::<f64>() / nc as f64;
                (Some(mean_est), Some(cov), Some(mcse), Some(width))
            } else {
                (None, None, None, None)
            };
            CellSummary {
                model,
                gamma: f64::from_bits(gb),
                lambda: f64::from_bits(lb),
                eta: f64::from_bits(eb),
                n: cell.len(),
                n_converged: nc,
                mean_estimate,
                coverage,
                coverage_mcse,
                mean_ci_width,
            }
        })
        .collect()
}

/// Run the full grid of fits for a scenario, parallel over replicates.
///
/// `variants` selects which of M1/M2/M3 to fit; M3 runs once per (rep, eta)
/// regardless of the gamma and lambda grids.
pub fn run_study(
    scenario: &SimScenario,
    variants: &[ModelVariant],
    base_config: &ChainConfig,
) -> Result<Vec<SimRecord>> {
    let mut jobs: Vec<(usize, f64, f64, f64, ModelVariant)> = Vec::new();
    for rep in 0..scenario.n_reps {
        for &gamma in &scenario.gamma_grid {
            for &lambda in &scenario.lambda_grid {
                for &eta in &scenario.eta_grid {
                    for &variant in variants {
                        if variant == ModelVariant::M3 {
                            // dedupe: only fit at the first gamma and lambda
                            if gamma != scenario.gamma_grid[0]
                                || lambda != scenario.lambda_grid[0]
                            {
                                continue;
                            }
                        }
                        jobs.push((rep, gamma, lambda, eta, variant));
                    }
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(rep, gamma, lambda, eta, variant)| {
            let dataset = generate_dataset(scenario, gamma, rep);
            fit_variant(scenario, variant, &dataset, rep, lambda, eta, base_config)
        })
        .collect()
}

/// Mean test positivity among the unknown-phi groups of one dataset.
pub fn unknown_group_positivity(dataset: &SimDataset, k_known: usize) -> f64 {
    let rates: Vec<f64> = dataset
        .groups
        .iter()
        .skip(k_known)
        .filter(|g| g.tests > 0)
        .map(|g| g.confirmed as f64 / g.tests as f64)
        .collect();
    rates.iter().sum::<f64>() / rates.len() as f64
}
