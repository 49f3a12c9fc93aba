//! Shared fixtures for the benchmark targets.

use ifr_core::model::{GroupObservation, LargeModel, PriorConfig};

/// A Europe-sized synthetic model: 31 groups, 5 with known-random testing,
/// three IR covariates and two IFR covariates.
pub fn europe_sized_model() -> LargeModel {
    let mut groups = Vec::new();
    for k in 0..31u64 {
        let known = k < 5;
        let population = 500_000 + 900_000 * k;
        let tests = population / 40;
        let confirmed = tests / (6 + k % 9);
        let deaths = population / 9_000 + 1;
        let mut g = GroupObservation::new(
            format!("group-{k}"),
            population,
            tests,
            confirmed,
            deaths,
            known,
        )
        .expect("valid synthetic group");
        let x = k as f64 / 31.0;
        g.ir_covariates = vec![x - 0.5, (1.3 * x).sin(), 0.25 - x * x];
        g.ifr_covariates = vec![0.4 * x, (0.7 * x).cos() - 0.5];
        groups.push(g);
    }
    LargeModel::new(groups, PriorConfig::default()).expect("valid model")
}
