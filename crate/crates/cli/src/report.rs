//! Report serialization: the posterior-summary JSON document, the retained
//! draws CSV, and the plot-data CSV for interval charts.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use ifr_core::diagnostics::PosteriorSummary;
use ifr_core::link::icloglog;
use ifr_core::model::{GroupObservation, PriorConfig};
use ifr_core::sampler::{ChainConfig, ChainResult};

/// Version tag of the JSON report schema.
pub const REPORT_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Serialize)]
pub struct GroupReport {
    pub label: String,
    pub phi_known_one: bool,
    pub ir: PosteriorSummary,
    pub ifr: PosteriorSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<PosteriorSummary>,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub schema_version: String,
    pub model: String,
    pub n_groups: usize,
    pub n_known_phi_one: usize,
    pub prior: PriorConfig,
    pub chains: usize,
    pub total_draws: u64,
    pub burn_in_fraction: f64,
    pub thinning: u64,
    pub seed: u64,
    pub converged: bool,
    pub max_rhat: f64,
    pub n_restarts: u32,
    /// Hyperparameters on their sampling (raw) scale.
    pub globals: Vec<PosteriorSummary>,
    /// theta and beta mapped through icloglog (probability scale).
    pub globals_probability_scale: Vec<PosteriorSummary>,
    pub groups: Vec<GroupReport>,
}

/// Build the fit report from a chain result.
pub fn fit_report(
    groups: &[GroupObservation],
    prior: &PriorConfig,
    config: &ChainConfig,
    result: &ChainResult,
    hpd_prob: f64,
) -> Result<FitReport> {
    let mut globals = Vec::new();
    let mut prob_scale = Vec::new();
    let mut group_reports: Vec<GroupReport> = groups
        .iter()
        .map(|g| GroupReport {
            label: g.label.clone(),
            phi_known_one: g.phi_known_one,
            ir: placeholder(),
            ifr: placeholder(),
            phi: None,
        })
        .collect();

    for (p, name) in result.parameter_names.iter().enumerate() {
        let summary = ifr_core::diagnostics::summarize(name, &result.column_chains(p), hpd_prob)?;
        if let Some(idx) = parse_indexed(name, "ir") {
            group_reports[idx].ir = summary;
        } else if let Some(idx) = parse_indexed(name, "ifr") {
            group_reports[idx].ifr = summary;
        } else if let Some(idx) = parse_indexed(name, "phi") {
            group_reports[idx].phi = Some(summary);
        } else if name == "ifr_overall" || name == "ir_overall" {
            prob_scale.push(summary);
        } else {
            globals.push(summary);
        }
    }

    Ok(FitReport {
        schema_version: REPORT_SCHEMA_VERSION.into(),
        model: "large_p".into(),
        n_groups: groups.len(),
        n_known_phi_one: groups.iter().filter(|g| g.phi_known_one).count(),
        prior: *prior,
        chains: config.n_chains,
        total_draws: result.total_draws,
        burn_in_fraction: config.burn_in_fraction,
        thinning: config.thinning,
        seed: config.seed,
        converged: result.converged,
        max_rhat: result.max_rhat(),
        n_restarts: result.n_restarts,
        globals,
        globals_probability_scale: prob_scale,
        groups: group_reports,
    })
}

fn placeholder() -> PosteriorSummary {
    PosteriorSummary {
        parameter: String::new(),
        median: f64::NAN,
        hpd_lower: f64::NAN,
        hpd_upper: f64::NAN,
        hpd_prob: f64::NAN,
        rhat: f64::NAN,
        ess: f64::NAN,
    }
}

/// Parse names like `ir[4]` into the group index.
fn parse_indexed(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    let inner = rest.strip_prefix('[')?.strip_suffix(']')?;
    inner.parse().ok()
}

/// Write the report JSON, the draws CSV, and the plot-data CSV.
pub fn write_fit_outputs(
    out_dir: &Path,
    report: &FitReport,
    result: &ChainResult,
) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(out_dir.join("summary.json"), json)?;

    let mut draws = Vec::new();
    result.write_csv(&mut draws)?;
    fs::write(out_dir.join("draws.csv"), draws)?;

    // plot data: one row per group and scale, for interval charts
    let mut w = csv::Writer::from_path(out_dir.join("plot_data.csv"))?;
    w.write_record(["panel", "label", "median", "lower", "upper"])?;
    for g in &report.groups {
        w.write_record([
            "ir",
            &g.label,
            &g.ir.median.to_string(),
            &g.ir.hpd_lower.to_string(),
            &g.ir.hpd_upper.to_string(),
        ])?;
        w.write_record([
            "ifr",
            &g.label,
            &g.ifr.median.to_string(),
            &g.ifr.hpd_lower.to_string(),
            &g.ifr.hpd_upper.to_string(),
        ])?;
        if let Some(phi) = &g.phi {
            w.write_record([
                "phi",
                &g.label,
                &phi.median.to_string(),
                &phi.hpd_lower.to_string(),
                &phi.hpd_upper.to_string(),
            ])?;
        }
    }
    for s in &report.globals_probability_scale {
        let panel = if s.parameter == "ifr_overall" { "ifr" } else { "ir" };
        w.write_record([
            panel,
            "Overall",
            &s.median.to_string(),
            &s.hpd_lower.to_string(),
            &s.hpd_upper.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Consistency guard used by tests: raw-scale and probability-scale
/// summaries must agree under the link transform (medians are equivariant).
pub fn scales_consistent(report: &FitReport) -> bool {
    let find = |v: &[PosteriorSummary], n: &str| -> Option<f64> {
        v.iter().find(|s| s.parameter == n).map(|s| s.median)
    };
    let ok_theta = match (
        find(&report.globals, "theta"),
        find(&report.globals_probability_scale, "ifr_overall"),
    ) {
        (Some(theta), Some(overall)) => (icloglog(theta) - overall).abs() < 1e-10,
        _ => false,
    };
    let ok_beta = match (
        find(&report.globals, "beta"),
        find(&report.globals_probability_scale, "ir_overall"),
    ) {
        (Some(beta), Some(overall)) => (icloglog(beta) - overall).abs() < 1e-10,
        _ => false,
    };
    ok_theta && ok_beta
}
