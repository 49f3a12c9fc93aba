//! Dataset ingestion: CSV rows with either raw (tests, confirmed) counts or
//! a reported seroprevalence CI that is inverted into effective counts, plus
//! the covariate transformations used by the regression model.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ifr_core::distributions::invert_binomial_ci;
use ifr_core::model::GroupObservation;

/// One raw CSV row. Exactly one of (tests, confirmed) or
/// (ir_ci_lower, ir_ci_upper) must be present.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct DatasetRow {
    pub label: String,
    #[serde(default)]
    pub date: String,
    pub population: u64,
    pub tests: Option<u64>,
    pub confirmed: Option<u64>,
    pub deaths: u64,
    pub ir_ci_lower: Option<f64>,
    pub ir_ci_upper: Option<f64>,
    pub prop_over_70: f64,
    pub hosp_beds_per_1000: f64,
    pub days_since_outbreak: f64,
    pub days_until_lockdown: f64,
    pub pop_density: f64,
}

/// Read the raw rows without any transformation.
pub fn read_rows(path: &Path) -> Result<Vec<DatasetRow>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open dataset {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<DatasetRow>().enumerate() {
        let row = row.with_context(|| format!("malformed row {}", i + 2))?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("dataset {} has no rows", path.display());
    }
    Ok(rows)
}

/// Write rows back out in the same schema.
pub fn write_rows<W: std::io::Write>(rows: &[DatasetRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn center_scale(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    for v in values.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

/// Turn raw rows into model observations.
///
/// Rows with a reported CI get effective counts from the beta-fit inversion
/// and are flagged as known-random testing. Covariates become the centered
/// and scaled logs used by the regression: days since outbreak,
/// days until lockdown + 1, and population density for the infection rate;
/// share aged 70+ and hospital beds for the IFR.
pub fn observations_from_rows(rows: &[DatasetRow]) -> Result<Vec<GroupObservation>> {
    let mut x1: Vec<f64> = rows.iter().map(|r| r.days_since_outbreak.ln()).collect();
    let mut x2: Vec<f64> = rows
        .iter()
        .map(|r| (r.days_until_lockdown + 1.0).ln())
        .collect();
    let mut x3: Vec<f64> = rows.iter().map(|r| r.pop_density.ln()).collect();
    let mut z1: Vec<f64> = rows.iter().map(|r| r.prop_over_70.ln()).collect();
    let mut z2: Vec<f64> = rows.iter().map(|r| r.hosp_beds_per_1000.ln()).collect();
    for v in [&mut x1, &mut x2, &mut x3, &mut z1, &mut z2] {
        center_scale(v);
    }

    let mut groups = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2; // header is line 1
        let (tests, confirmed, known) = match (row.tests, row.confirmed) {
            (Some(t), Some(cc)) => {
                if row.ir_ci_lower.is_some() || row.ir_ci_upper.is_some() {
                    bail!(
                        "row {line} ({}): provide either counts or a CI, not both",
                        row.label
                    );
                }
                (t, cc, false)
            }
            (None, None) => match (row.ir_ci_lower, row.ir_ci_upper) {
                (Some(lo), Some(hi)) => {
                    let (cc, t) = invert_binomial_ci(lo, hi).with_context(|| {
                        format!("row {line} ({}): CI inversion failed", row.label)
                    })?;
                    (t, cc, true)
                }
                _ => bail!(
                    "row {line} ({}): needs (tests, confirmed) or (ir_ci_lower, ir_ci_upper)",
                    row.label
                ),
            },
            _ => bail!(
                "row {line} ({}): tests and confirmed must be given together",
                row.label
            ),
        };
        if confirmed > tests {
            bail!(
                "row {line} ({}): confirmed ({confirmed}) exceeds tests ({tests})",
                row.label
            );
        }
        let mut g = GroupObservation::new(
            row.label.clone(),
            row.population,
            tests,
            confirmed,
            row.deaths,
            known,
        )
        .with_context(|| format!("row {line} ({})", row.label))?;
        g.ir_covariates = vec![x1[i], x2[i], x3[i]];
        g.ifr_covariates = vec![z1[i], z2[i]];
        groups.push(g);
    }
    Ok(groups)
}

/// Load a dataset file into model observations.
pub fn load_dataset(path: &Path) -> Result<Vec<GroupObservation>> {
    observations_from_rows(&read_rows(path)?)
}
