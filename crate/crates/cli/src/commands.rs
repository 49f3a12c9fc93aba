//! Subcommand implementations shared by the binary and the test suites.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use ifr_core::diagnostics::{self, PosteriorSummary};
use ifr_core::distributions::fit_beta_to_interval;
use ifr_core::identification::{global_interval, group_interval, GlobalProblem, GroupSignal};
use ifr_core::model::{single_group_ifr, GroupObservation, LargeModel, PriorConfig};
use ifr_core::sampler::{run_chains, ChainConfig};
use ifr_core::simulation::{aggregate, run_study, ModelVariant, SimScenario};

use crate::config::RunSettings;
use crate::dataset::load_dataset;
use crate::report::{fit_report, write_fit_outputs, FitReport};

/// A command failure mapped to the process exit code.
#[derive(Debug)]
pub enum CommandError {
    /// Malformed input or invalid options (exit 2).
    Data(anyhow::Error),
    /// MCMC failed its convergence diagnostic (exit 3).
    Convergence(String),
    /// Identification problem has no feasible value (exit 4).
    Infeasible(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Data(_) => 2,
            CommandError::Convergence(_) => 3,
            CommandError::Infeasible(_) => 4,
        }
    }
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::Data(e) => write!(f, "{e:#}"),
            CommandError::Convergence(m) => write!(f, "convergence failure: {m}"),
            CommandError::Infeasible(m) => write!(f, "infeasible identification problem: {m}"),
        }
    }
}

impl From<anyhow::Error> for CommandError {
    fn from(e: anyhow::Error) -> Self {
        CommandError::Data(e)
    }
}

pub type CommandResult<T = ()> = std::result::Result<T, CommandError>;

/// Defaults for reported fits: 4 chains of 10,000 draws, 10% burn-in,
/// thinning of 50.
pub fn fit_chain_config(settings: &RunSettings) -> ChainConfig {
    let chains = settings.chains.unwrap_or(4);
    let per_chain = settings.draws.unwrap_or(10_000);
    ChainConfig {
        n_chains: chains,
        total_draws: per_chain * chains as u64,
        burn_in_fraction: settings.burn_in.unwrap_or(0.10),
        thinning: settings.thin.unwrap_or(50),
        seed: settings.seed.unwrap_or(20200501),
        max_total_draws: per_chain * chains as u64 * 16,
        ..ChainConfig::default()
    }
}

fn prior_from(settings: &RunSettings) -> PriorConfig {
    PriorConfig {
        lambda: settings.lambda.unwrap_or(0.05),
        eta: settings.eta.unwrap_or(0.1),
        coef_sd: 1.0,
        fixed_effects: settings.fixed_effects.unwrap_or(false),
    }
}

fn out_dir(settings: &RunSettings) -> PathBuf {
    PathBuf::from(settings.output_dir.clone().unwrap_or_else(|| "out".into()))
}

/// Options of the `fit` subcommand beyond the shared settings.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub data: PathBuf,
    /// Use only the known-random (seroprevalence) rows, without covariates.
    pub sero_only: bool,
    /// Drop group-level covariates.
    pub no_covariates: bool,
    /// Fit the two-parameter single-group model to one labeled row.
    pub single_group: Option<String>,
    /// HPD probability for reported intervals.
    pub hpd_prob: f64,
}

/// Run a fit and write `summary.json`, `draws.csv`, `plot_data.csv`.
pub fn fit(options: &FitOptions, settings: &RunSettings) -> CommandResult<FitReport> {
    let mut groups = load_dataset(&options.data)?;
    let dir = out_dir(settings);
    let hpd_prob = if options.hpd_prob > 0.0 { options.hpd_prob } else { 0.95 };

    if let Some(label) = &options.single_group {
        return single_group(&groups, label, settings, &dir, hpd_prob);
    }

    if options.sero_only {
        groups.retain(|g| g.phi_known_one);
        if groups.is_empty() {
            return Err(CommandError::Data(anyhow!(
                "no known-random rows in the dataset"
            )));
        }
    }
    if options.sero_only || options.no_covariates {
        for g in &mut groups {
            g.ir_covariates.clear();
            g.ifr_covariates.clear();
        }
    }

    let prior = prior_from(settings);
    let config = fit_chain_config(settings);
    let model = LargeModel::new(groups.clone(), prior).map_err(|e| anyhow!(e))?;
    let result = run_chains(&model, &config).map_err(|e| anyhow!(e))?;
    let report = fit_report(&groups, &prior, &config, &result, hpd_prob)?;
    write_fit_outputs(&dir, &report, &result)?;
    if !result.converged {
        return Err(CommandError::Convergence(format!(
            "max R-hat {:.4} after {} restarts; outputs written to {}",
            result.max_rhat(),
            result.n_restarts,
            dir.display()
        )));
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
struct SingleGroupReport {
    schema_version: String,
    model: String,
    label: String,
    confirmed: u64,
    tests: u64,
    deaths: u64,
    population: u64,
    ifr: PosteriorSummary,
    ir: PosteriorSummary,
}

fn single_group(
    groups: &[GroupObservation],
    label: &str,
    settings: &RunSettings,
    dir: &Path,
    hpd_prob: f64,
) -> CommandResult<FitReport> {
    let group = groups
        .iter()
        .find(|g| g.label == label)
        .ok_or_else(|| anyhow!("no row labeled {label:?} in the dataset"))?;
    let config = fit_chain_config(settings);
    let fit = single_group_ifr(
        group.confirmed,
        group.tests,
        group.deaths,
        group.population,
        &config,
    )
    .map_err(|e| match e {
        ifr_core::Error::McmcNonConvergence { rhat, restarts } => {
            CommandError::Convergence(format!("max R-hat {rhat:.4} after {restarts} restarts"))
        }
        other => CommandError::Data(anyhow!(other)),
    })?;
    let mut ifr = fit.ifr.clone();
    let mut ir = fit.ir.clone();
    if hpd_prob != 0.95 {
        let idx = fit.result.column_index("ifr").expect("ifr column");
        let (lo, hi) = diagnostics::hpd_interval(&fit.result.pooled(idx), hpd_prob)
            .map_err(|e| anyhow!(e))?;
        ifr.hpd_lower = lo;
        ifr.hpd_upper = hi;
        ifr.hpd_prob = hpd_prob;
        let idx = fit.result.column_index("ir").expect("ir column");
        let (lo, hi) = diagnostics::hpd_interval(&fit.result.pooled(idx), hpd_prob)
            .map_err(|e| anyhow!(e))?;
        ir.hpd_lower = lo;
        ir.hpd_upper = hi;
        ir.hpd_prob = hpd_prob;
    }
    let report = SingleGroupReport {
        schema_version: crate::report::REPORT_SCHEMA_VERSION.into(),
        model: "single_group".into(),
        label: label.to_string(),
        confirmed: group.confirmed,
        tests: group.tests,
        deaths: group.deaths,
        population: group.population,
        ifr,
        ir,
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&report).map_err(|e| anyhow!(e))?,
    )
    .map_err(|e| CommandError::Data(anyhow!(e)))?;
    let mut draws = Vec::new();
    fit.result.write_csv(&mut draws).map_err(|e| anyhow!(e))?;
    fs::write(dir.join("draws.csv"), draws).map_err(|e| CommandError::Data(anyhow!(e)))?;

    // wrap in the fit-report shape for callers that want a uniform type
    let prior = prior_from(settings);
    let config = fit_chain_config(settings);
    let report = FitReport {
        schema_version: crate::report::REPORT_SCHEMA_VERSION.into(),
        model: "single_group".into(),
        n_groups: 1,
        n_known_phi_one: 1,
        prior,
        chains: config.n_chains,
        total_draws: fit.result.total_draws,
        burn_in_fraction: config.burn_in_fraction,
        thinning: config.thinning,
        seed: config.seed,
        converged: fit.result.converged,
        max_rhat: fit.result.max_rhat(),
        n_restarts: fit.result.n_restarts,
        globals: vec![report.ifr.clone(), report.ir.clone()],
        globals_probability_scale: vec![report.ifr, report.ir],
        groups: vec![],
    };
    Ok(report)
}

/// Options of the `simulate` subcommand.
#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub gammas: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub etas: Option<Vec<f64>>,
    pub reps: Option<usize>,
    /// Run the complete published design (1,100 replicates, full grids).
    pub full_design: bool,
    pub models: Vec<ModelVariant>,
}

/// Run the simulation study; writes `records.csv` and `aggregate.csv`.
pub fn simulate(options: &SimulateOptions, settings: &RunSettings) -> CommandResult<usize> {
    let mut scenario = if options.full_design {
        SimScenario {
            n_reps: 1_100,
            ..SimScenario::default()
        }
    } else {
        SimScenario::desk_scale()
    };
    if let Some(g) = &options.gammas {
        scenario.gamma_grid = g.clone();
    }
    if let Some(l) = &options.lambdas {
        scenario.lambda_grid = l.clone();
    }
    if let Some(e) = &options.etas {
        scenario.eta_grid = e.clone();
    }
    if let Some(r) = options.reps {
        scenario.n_reps = r;
    }
    if let Some(seed) = settings.seed {
        scenario.seed = seed;
    }
    let config = ChainConfig {
        seed: scenario.seed,
        ..ChainConfig::default()
    };
    let records = run_study(&scenario, &options.models, &config).map_err(|e| anyhow!(e))?;

    let dir = out_dir(settings);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut w = csv::Writer::from_path(dir.join("records.csv")).map_err(|e| anyhow!(e))?;
    w.write_record([
        "rep",
        "gamma",
        "lambda",
        "eta",
        "model",
        "point_estimate",
        "ci_width",
        "covered",
        "converged",
        "n_restarts",
    ])
    .map_err(|e| anyhow!(e))?;
    for r in &records {
        w.write_record([
            r.rep.to_string(),
            r.gamma.to_string(),
            r.lambda.to_string(),
            r.eta.to_string(),
            r.model.label().to_string(),
            r.point_estimate.to_string(),
            r.ci_width.to_string(),
            r.covered.to_string(),
            r.converged.to_string(),
            r.n_restarts.to_string(),
        ])
        .map_err(|e| anyhow!(e))?;
    }
    w.flush().map_err(|e| anyhow!(e))?;

    let cells = aggregate(&records);
    let mut w = csv::Writer::from_path(dir.join("aggregate.csv")).map_err(|e| anyhow!(e))?;
    w.write_record([
        "model",
        "gamma",
        "lambda",
        "eta",
        "n",
        "n_converged",
        "mean_estimate",
        "coverage",
        "coverage_mcse",
        "mean_ci_width",
    ])
    .map_err(|e| anyhow!(e))?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for c in &cells {
        w.write_record([
            c.model.label().to_string(),
            c.gamma.to_string(),
            c.lambda.to_string(),
            c.eta.to_string(),
            c.n.to_string(),
            c.n_converged.to_string(),
            opt(c.mean_estimate),
            opt(c.coverage),
            opt(c.coverage_mcse),
            opt(c.mean_ci_width),
        ])
        .map_err(|e| anyhow!(e))?;
    }
    w.flush().map_err(|e| anyhow!(e))?;
    Ok(records.len())
}

#[derive(Debug, Serialize)]
pub struct IdentifyReport {
    pub schema_version: String,
    pub tau_bar: f64,
    pub grid_step: f64,
    pub groups: Vec<GroupIntervalReport>,
    pub global: Option<ifr_core::identification::IdentInterval>,
}

#[derive(Debug, Serialize)]
pub struct GroupIntervalReport {
    pub index: usize,
    pub signal: GroupSignal,
    pub interval: ifr_core::identification::IdentInterval,
}

/// `identify`: read (a, b, phi_lo, phi_hi) rows and compute intervals.
pub fn identify(
    input: &Path,
    tau_bar: f64,
    grid_step: Option<f64>,
    settings: &RunSettings,
) -> CommandResult<IdentifyReport> {
    let mut reader = csv::Reader::from_path(input)
        .with_context(|| format!("cannot open {}", input.display()))?;
    let mut signals = Vec::new();
    for (i, record) in reader.deserialize::<(f64, f64, f64, f64)>().enumerate() {
        let (a, b, phi_lo, phi_hi) =
            record.with_context(|| format!("malformed signal row {}", i + 2))?;
        signals.push(
            GroupSignal::new(a, b, phi_lo, phi_hi)
                .map_err(|e| anyhow!("signal row {}: {e}", i + 2))?,
        );
    }
    if signals.is_empty() {
        return Err(CommandError::Data(anyhow!("no signal rows in input")));
    }

    let mut problem = GlobalProblem::new(signals.clone(), tau_bar).map_err(|e| anyhow!(e))?;
    if let Some(step) = grid_step {
        problem.grid_step = step;
    }
    let groups: Vec<GroupIntervalReport> = signals
        .iter()
        .enumerate()
        .map(|(index, s)| {
            Ok(GroupIntervalReport {
                index,
                signal: *s,
                interval: group_interval(s).map_err(|e| anyhow!(e))?,
            })
        })
        .collect::<Result<_>>()?;
    let global = global_interval(&problem).map_err(|e| anyhow!(e))?;

    let report = IdentifyReport {
        schema_version: crate::report::REPORT_SCHEMA_VERSION.into(),
        tau_bar,
        grid_step: problem.grid_step,
        groups,
        global,
    };

    let dir = out_dir(settings);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(
        dir.join("identification.json"),
        serde_json::to_string_pretty(&report).map_err(|e| anyhow!(e))?,
    )
    .map_err(|e| CommandError::Data(anyhow!(e)))?;
    let mut w = csv::Writer::from_path(dir.join("intervals.csv")).map_err(|e| anyhow!(e))?;
    w.write_record(["group", "lower", "upper"]).map_err(|e| anyhow!(e))?;
    for g in &report.groups {
        w.write_record([
            g.index.to_string(),
            g.interval.lower.to_string(),
            g.interval.upper.to_string(),
        ])
        .map_err(|e| anyhow!(e))?;
    }
    if let Some(global) = &report.global {
        w.write_record([
            "global".to_string(),
            global.lower.to_string(),
            global.upper.to_string(),
        ])
        .map_err(|e| anyhow!(e))?;
    }
    w.flush().map_err(|e| anyhow!(e))?;

    if report.global.is_none() {
        return Err(CommandError::Infeasible(format!(
            "no mean IFR satisfies the tau_bar = {tau_bar} cap; see {}",
            dir.join("identification.json").display()
        )));
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct InvertCiReport {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub beta: f64,
    pub confirmed: u64,
    pub tests: u64,
}

/// `invert-ci`: effective counts for one reported interval.
pub fn invert_ci(lower: f64, upper: f64) -> CommandResult<InvertCiReport> {
    let fit = fit_beta_to_interval(lower, upper).map_err(|e| anyhow!(e))?;
    let confirmed = fit.alpha.round() as u64;
    let tests = confirmed + fit.beta.round() as u64 + 1;
    Ok(InvertCiReport {
        lower,
        upper,
        alpha: fit.alpha,
        beta: fit.beta,
        confirmed,
        tests,
    })
}

/// `summarize`: posterior summaries from a draws CSV written by `fit`.
pub fn summarize(draws_path: &Path, hpd_prob: f64) -> CommandResult<Vec<PosteriorSummary>> {
    let mut reader = csv::Reader::from_path(draws_path)
        .with_context(|| format!("cannot open {}", draws_path.display()))?;
    let headers = reader.headers().map_err(|e| anyhow!(e))?.clone();
    if headers.len() < 3 || &headers[0] != "chain" || &headers[1] != "draw" {
        return Err(CommandError::Data(anyhow!(
            "draws CSV must start with chain,draw columns"
        )));
    }
    let n_params = headers.len() - 2;
    let mut by_chain: Vec<Vec<Vec<f64>>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| anyhow!(e))?;
        let chain: usize = record[0].parse().map_err(|e| anyhow!("bad chain id: {e}"))?;
        while by_chain.len() <= chain {
            by_chain.push(vec![Vec::new(); n_params]);
        }
        for p in 0..n_params {
            let v: f64 = record[p + 2]
                .parse()
                .map_err(|e| anyhow!("bad value in column {}: {e}", &headers[p + 2]))?;
            by_chain[chain][p].push(v);
        }
    }
    if by_chain.is_empty() {
        return Err(CommandError::Data(anyhow!("draws CSV has no rows")));
    }
    let mut out = Vec::with_capacity(n_params);
    for p in 0..n_params {
        let chains: Vec<Vec<f64>> = by_chain.iter().map(|c| c[p].clone()).collect();
        out.push(
            diagnostics::summarize(&headers[p + 2], &chains, hpd_prob).map_err(|e| anyhow!(e))?,
        );
    }
    Ok(out)
}
