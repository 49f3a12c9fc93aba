//! Multi-chain MCMC orchestration: per-iteration sweeps over univariate,
//! block, and transformed moves; burn-in-only adaptation; thinning; R-hat
//! checks; and the restart-with-doubled-draws protocol.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{self, PosteriorSummary};
use crate::error::{Error, Result};
use crate::streams::substream;

use super::adapt::{cholesky_with_ridge, RunningCov, ScaleAdapter};
use super::moves;
use super::target::{CoordKind, Target};

/// Which move families the per-iteration sweep applies.
#[derive(Debug, Clone, Copy)]
pub struct SamplerSuite {
    pub univariate: bool,
    pub block: bool,
    pub rates_transform: bool,
    pub phi_transform: bool,
    /// Joint move of the shared preferentiality bound holding phis fixed.
    pub bound_rescale: bool,
    /// Per-group slide along the ridge the likelihood leaves free.
    pub trio_slide: bool,
}

impl Default for SamplerSuite {
    fn default() -> Self {
        Self {
            univariate: true,
            block: true,
            rates_transform: true,
            phi_transform: true,
            bound_rescale: true,
            trio_slide: true,
        }
    }
}

impl SamplerSuite {
    /// Univariate updates only (used for mixing comparisons).
    pub fn univariate_only() -> Self {
        Self {
            univariate: true,
            block: false,
            rates_transform: false,
            phi_transform: false,
            bound_rescale: false,
            trio_slide: false,
        }
    }
}

/// Run configuration for [`run_chains`].
#[derive(Debug, Clone)]
pub struct ChainConfig {
    /// Number of independent chains.
    pub n_chains: usize,
    /// Total MCMC draws summed over chains (before burn-in and thinning).
    pub total_draws: u64,
    /// Fraction of each chain discarded as burn-in (adaptation happens here).
    pub burn_in_fraction: f64,
    /// Keep every `thinning`-th post-burn-in draw.
    pub thinning: u64,
    /// Convergence threshold on the largest per-parameter R-hat.
    pub rhat_threshold: f64,
    /// Restarts allowed, each doubling `total_draws`.
    pub max_restarts: u32,
    /// Hard cap on total draws across restarts.
    pub max_total_draws: u64,
    /// Root seed; chains and restarts derive independent streams from it.
    pub seed: u64,
    /// Move families to apply.
    pub suite: SamplerSuite,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 3,
            total_draws: 18_000,
            burn_in_fraction: 0.20,
            thinning: 5,
            rhat_threshold: 1.05,
            max_restarts: 4,
            max_total_draws: 288_000,
            seed: 0,
            suite: SamplerSuite::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::InvalidParameter("n_chains must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::InvalidParameter(format!(
                "burn_in_fraction must be in [0,1), got {}",
                self.burn_in_fraction
            )));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be >= 1".into()));
        }
        if !(self.rhat_threshold > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rhat_threshold must exceed 1, got {}",
                self.rhat_threshold
            )));
        }
        if self.total_draws < self.n_chains as u64 {
            return Err(Error::InvalidParameter(
                "total_draws must cover at least one draw per chain".into(),
            ));
        }
        Ok(())
    }
}

/// Retained draws and diagnostics from a (possibly restarted) run.
#[derive(Debug, Clone, Serialize)]
pub struct ChainResult {
    /// Names of the reported parameters (columns).
    pub parameter_names: Vec<String>,
    /// Retained draws: `chains[c][i][p]` is draw `i` of parameter `p` in
    /// chain `c`.
    pub chains: Vec<Vec<Vec<f64>>>,
    /// Split rank-normalized R-hat per parameter (NaN for single chains).
    pub rhat: Vec<f64>,
    /// Effective sample size per parameter.
    pub ess: Vec<f64>,
    /// Restarts consumed before this result.
    pub n_restarts: u32,
    /// True when max R-hat came in at or under the threshold.
    pub converged: bool,
    /// Total draws (across chains) used by the final attempt.
    pub total_draws: u64,
}

impl ChainResult {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    /// Per-chain draw vectors for one parameter.
    pub fn column_chains(&self, p: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.iter().map(|row| row[p]).collect())
            .collect()
    }

    /// All chains pooled for one parameter.
    pub fn pooled(&self, p: usize) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|c| c.iter().map(|row| row[p]))
            .collect()
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Posterior summaries of every reported parameter.
    pub fn summaries(&self, hpd_prob: f64) -> Result<Vec<PosteriorSummary>> {
        (0..self.parameter_names.len())
            .map(|p| {
                diagnostics::summarize(
                    &self.parameter_names[p],
                    &self.column_chains(p),
                    hpd_prob,
                )
            })
            .collect()
    }

    /// Write the draw matrix as CSV: `chain,draw` then one column per
    /// parameter.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "chain,draw")?;
        for name in &self.parameter_names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, row) in chain.iter().enumerate() {
                write!(w, "{c},{i}")?;
                for value in row {
                    write!(w, ",{value}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Internal diagnostics from one chain, used by adaptation-freeze tests.
#[derive(Debug, Clone)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct ChainDiag {
    pub scales_at_burn_end: Vec<f64>,
    pub scales_at_end: Vec<f64>,
}

pub(crate) fn run_chain_internal<T: Target + ?Sized>(
    target: &T,
    n_iters: u64,
    burn_in: u64,
    thin: u64,
    suite: SamplerSuite,
    rng: &mut ChaCha8Rng,
    init: Vec<f64>,
) -> Result<(Vec<Vec<f64>>, ChainDiag)> {
    let dim = target.dim();
    let kinds = target.coord_kinds();
    let groups = target.group_coords();

    let mut state = init;
    let mut lp = target.log_density(&state);
    if !lp.is_finite() {
        return Err(Error::InvalidParameter(
            "initial state has non-finite log density".into(),
        ));
    }

    let mut uni_scales: Vec<ScaleAdapter> = kinds
        .iter()
        .map(|k| match k {
            CoordKind::Continuous => ScaleAdapter::new(0.5, 0.44),
            CoordKind::Count => ScaleAdapter::new(2.0, 0.44),
        })
        .collect();

    struct BlockState {
        coords: Vec<usize>,
        scale: ScaleAdapter,
        cov: RunningCov,
        chol: Vec<f64>,
    }
    let mut blocks: Vec<BlockState> = groups
        .iter()
        .filter_map(|g| {
            let mut coords = vec![g.kappa_ir];
            if let Some(k2) = g.kappa_ifr {
                coords.push(k2);
            }
            if let Some(p) = g.phi {
                coords.push(p);
            }
            if coords.len() < 2 {
                return None;
            }
            let dim = coords.len();
            let mut chol = vec![0.0; dim * dim];
            for d in 0..dim {
                chol[d * dim + d] = 1.0;
            }
            Some(BlockState {
                coords,
                scale: ScaleAdapter::new(0.2, 0.234),
                cov: RunningCov::new(dim),
                chol,
            })
        })
        .collect();

    let mut rates_scales: Vec<ScaleAdapter> = groups
        .iter()
        .map(|_| ScaleAdapter::new(0.3, 0.44))
        .collect();
    let mut phi_scales: Vec<ScaleAdapter> = groups
        .iter()
        .map(|_| ScaleAdapter::new(0.3, 0.44))
        .collect();
    let mut bound_scale = ScaleAdapter::new(0.3, 0.44);
    let mut slide_scales: Vec<ScaleAdapter> = groups
        .iter()
        .map(|_| ScaleAdapter::new(0.3, 0.44))
        .collect();

    let retained_capacity = ((n_iters.saturating_sub(burn_in)) / thin + 1) as usize;
    let mut retained: Vec<Vec<f64>> = Vec::with_capacity(retained_capacity);
    let mut scales_at_burn_end = Vec::new();

    for iter in 0..n_iters {
        let adapting = iter < burn_in;

        if suite.univariate {
            for j in 0..dim {
                let scale = uni_scales[j].scale();
                let acc = match kinds[j] {
                    CoordKind::Continuous => {
                        moves::univariate_step(target, &mut state, &mut lp, j, scale, rng)
                    }
                    CoordKind::Count => {
                        moves::count_step(target, &mut state, &mut lp, j, scale, rng)
                    }
                };
                if adapting {
                    uni_scales[j].update(acc);
                }
            }
        }

        if suite.block {
            for b in blocks.iter_mut() {
                let acc = moves::block_step(
                    target,
                    &mut state,
                    &mut lp,
                    &b.coords,
                    &b.chol,
                    b.scale.scale(),
                    rng,
                );
                if adapting {
                    b.scale.update(acc);
                    let values: Vec<f64> = b.coords.iter().map(|&c| state[c]).collect();
                    b.cov.push(&values);
                    if b.cov.len() >= 50 && b.cov.len() % 100 == 0 {
                        if let Some(cov) = b.cov.covariance() {
                            b.chol = cholesky_with_ridge(&cov, b.coords.len(), 1e-8);
                        }
                    }
                }
            }
        }

        if suite.rates_transform {
            for (k, g) in groups.iter().enumerate() {
                if let Some(k2) = g.kappa_ifr {
                    let acc = moves::rates_transform_step(
                        target,
                        &mut state,
                        &mut lp,
                        g.kappa_ir,
                        k2,
                        rates_scales[k].scale(),
                        rng,
                    );
                    if adapting {
                        rates_scales[k].update(acc);
                    }
                }
            }
        }

        if suite.phi_transform {
            for (k, g) in groups.iter().enumerate() {
                if let Some(phi_idx) = g.phi {
                    let acc = moves::phi_transform_step(
                        target,
                        &mut state,
                        &mut lp,
                        k,
                        phi_idx,
                        g.kappa_ir,
                        phi_scales[k].scale(),
                        rng,
                    );
                    if adapting {
                        phi_scales[k].update(acc);
                    }
                }
            }
        }

        if suite.trio_slide {
            for (k, g) in groups.iter().enumerate() {
                if let Some(k2) = g.kappa_ifr {
                    let acc = moves::trio_slide_step(
                        target,
                        &mut state,
                        &mut lp,
                        k,
                        g.phi,
                        g.kappa_ir,
                        k2,
                        slide_scales[k].scale(),
                        rng,
                    );
                    if adapting {
                        slide_scales[k].update(acc);
                    }
                }
            }
        }

        if suite.bound_rescale && target.bound_coord().is_some() {
            let acc =
                moves::bound_rescale_step(target, &mut state, &mut lp, bound_scale.scale(), rng);
            if adapting {
                bound_scale.update(acc);
            }
        }

        if iter + 1 == burn_in {
            scales_at_burn_end = uni_scales.iter().map(|s| s.scale()).collect();
        }
        if iter >= burn_in && (iter - burn_in) % thin == 0 {
            retained.push(target.tracked(&state));
        }
    }

    let diag = ChainDiag {
        scales_at_burn_end,
        scales_at_end: uni_scales.iter().map(|s| s.scale()).collect(),
    };
    Ok((retained, diag))
}

fn run_attempt<T: Target + ?Sized>(
    target: &T,
    config: &ChainConfig,
    attempt: u32,
    total_draws: u64,
    inits: Option<&[Vec<f64>]>,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let per_chain = total_draws / config.n_chains as u64;
    let burn = (config.burn_in_fraction * per_chain as f64).round() as u64;
    let chain_ids: Vec<usize> = (0..config.n_chains).collect();
    chain_ids
        .par_iter()
        .map(|&c| {
            let mut rng = substream(config.seed, &[attempt as u64, c as u64]);
            let init = match inits {
                Some(states) => states[c % states.len()].clone(),
                None => target.initial_state(&mut rng),
            };
            run_chain_internal(
                target,
                per_chain,
                burn,
                config.thinning,
                config.suite,
                &mut rng,
                init,
            )
            .map(|(draws, _)| draws)
        })
        .collect()
}

fn assemble_result<T: Target + ?Sized>(
    target: &T,
    config: &ChainConfig,
    chains: Vec<Vec<Vec<f64>>>,
    n_restarts: u32,
    total_draws: u64,
) -> ChainResult {
    let names = target.tracked_names();
    let n_params = names.len();
    let mut rhat = vec![f64::NAN; n_params];
    let mut ess = vec![f64::NAN; n_params];
    let enough = chains.len() >= 2 && chains.iter().all(|c| c.len() >= 10);
    for p in 0..n_params {
        let cols: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|row| row[p]).collect())
            .collect();
        if enough {
            rhat[p] = diagnostics::gelman_rubin(&cols).unwrap_or(f64::INFINITY);
        }
        ess[p] = diagnostics::ess(&cols);
    }
    let converged = if enough {
        rhat.iter().all(|r| *r <= config.rhat_threshold)
    } else {
        // not enough structure to assess; callers asked for a single chain
        chains.len() < 2
    };
    ChainResult {
        parameter_names: names,
        chains,
        rhat,
        ess,
        n_restarts,
        converged,
        total_draws,
    }
}

/// Run independent chains with burn-in adaptation, thinning, and R-hat
/// checked restarts.
///
/// When the largest per-parameter R-hat exceeds the threshold the entire run
/// is discarded and restarted from scratch with twice the total draws (fresh
/// random streams), up to `max_restarts` times or the `max_total_draws` cap.
/// The final attempt's result is returned either way, with `converged`
/// recording the outcome.
pub fn run_chains<T: Target + ?Sized>(target: &T, config: &ChainConfig) -> Result<ChainResult> {
    run_chains_impl(target, config, None)
}

/// [`run_chains`] with explicit initial states (cycled across chains).
/// Used to probe convergence behavior from chosen starting points.
pub fn run_chains_with_inits<T: Target + ?Sized>(
    target: &T,
    config: &ChainConfig,
    inits: &[Vec<f64>],
) -> Result<ChainResult> {
    run_chains_impl(target, config, Some(inits))
}

fn run_chains_impl<T: Target + ?Sized>(
    target: &T,
    config: &ChainConfig,
    inits: Option<&[Vec<f64>]>,
) -> Result<ChainResult> {
    config.validate()?;
    let mut result = None;
    for attempt in 0..=config.max_restarts {
        let total = (config.total_draws << attempt).min(config.max_total_draws);
        let chains = run_attempt(target, config, attempt, total, inits)?;
        let assembled = assemble_result(target, config, chains, attempt, total);
        let done = assembled.converged;
        result = Some(assembled);
        if done {
            break;
        }
    }
    Ok(result.expect("at least one attempt always runs"))
}
