//! Convergence diagnostics and posterior summaries: split-chain
//! rank-normalized R-hat, effective sample size, highest-posterior-density
//! intervals, and per-parameter summary records.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::inv_norm_cdf;

/// Posterior summary for one parameter.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorSummary {
    pub parameter: String,
    pub median: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
    pub hpd_prob: f64,
    pub rhat: f64,
    pub ess: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Split each chain in half, dropping the middle draw of odd-length chains.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Replace values by normal scores of their pooled ranks (average ranks for
/// ties), preserving the chain structure.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(chains.len());
    let mut offset = 0;
    for c in chains {
        offsets.push(offset);
        for (i, &x) in c.iter().enumerate() {
            indexed.push((x, offset + i));
        }
        offset += c.len();
    }
    indexed.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut ranks = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for item in &indexed[i..=j] {
            ranks[item.1] = avg_rank;
        }
        i = j + 1;
    }

    let n = total as f64;
    chains
        .iter()
        .zip(&offsets)
        .map(|(c, &off)| {
            (0..c.len())
                .map(|i| inv_norm_cdf((ranks[off + i] - 0.375) / (n + 0.25)))
                .collect()
        })
        .collect()
}

/// Potential scale reduction factor over already-prepared (split) chains.
fn psrf(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains.iter().map(|c| sample_var(c)).sum::<f64>() / m;
    let between = n * sample_var(&chain_means);
    if within == 0.0 {
        return f64::INFINITY;
    }
    (((n - 1.0) / n * within + between / n) / within).sqrt()
}

/// Split-chain rank-normalized Gelman-Rubin R-hat.
///
/// Chains are split in half, pooled values are replaced by normal scores of
/// their ranks, and the classic between/within variance ratio is computed on
/// the result. Values near 1 indicate the chains are mixing over the same
/// distribution. Zero within-chain variance yields `+inf` as a sentinel.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter(
            "R-hat needs at least 2 chains".into(),
        ));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidParameter(
            "R-hat needs equal-length chains".into(),
        ));
    }
    if len < 10 {
        return Err(Error::InsufficientDraws {
            need: 10,
            have: len,
        });
    }
    let split = split_chains(chains);
    Ok(psrf(&rank_normalize(&split)))
}

/// Effective sample size across chains for one parameter.
///
/// Combines per-chain autocovariances into pooled autocorrelations and sums
/// them with Geyer's initial monotone positive sequence.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 4 {
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let total = (m * n) as f64;

    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let chain_vars: Vec<f64> = chains.iter().map(|c| sample_var(c)).collect();
    let within = chain_vars.iter().sum::<f64>() / m as f64;
    let between = if m > 1 {
        n as f64 * sample_var(&chain_means)
    } else {
        0.0
    };
    let var_plus = within * (n as f64 - 1.0) / n as f64 + between / n as f64;
    if var_plus == 0.0 {
        return f64::NAN;
    }

    let acov = |c: &[f64], chain_mean: f64, lag: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..(n - lag) {
            s += (c[i] - chain_mean) * (c[i + lag] - chain_mean);
        }
        s / n as f64
    };

    // rho_t = 1 - (W - mean_acov_t) / var_plus, summed in Geyer pairs
    let max_lag = n - 1;
    let mut rho_prev_pair_sum = f64::INFINITY;
    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 <= max_lag {
        let mean_acov = |l: usize| {
            chains
                .iter()
                .zip(&chain_means)
                .map(|(c, &cm)| acov(c, cm, l))
                .sum::<f64>()
                / m as f64
        };
        let rho_a = 1.0 - (within - mean_acov(lag)) / var_plus;
        let rho_b = 1.0 - (within - mean_acov(lag + 1)) / var_plus;
        let pair = rho_a + rho_b;
        if pair <= 0.0 {
            break;
        }
        // initial monotone sequence: never increase
        let pair = pair.min(rho_prev_pair_sum);
        tau += 2.0 * pair;
        rho_prev_pair_sum = pair;
        lag += 2;
    }
    total / tau
}

/// Shortest interval containing `ceil(prob * n)` of the sorted draws.
pub fn hpd_interval(draws: &[f64], prob: f64) -> Result<(f64, f64)> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "hpd probability must be in (0,1), got {prob}"
        )));
    }
    let n = draws.len();
    if n < 100 {
        return Err(Error::InsufficientDraws { need: 100, have: n });
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let window = (prob * n as f64).ceil() as usize;
    let window = window.clamp(1, n);
    let mut best = (sorted[0], sorted[window - 1]);
    let mut best_width = best.1 - best.0;
    for i in 1..=(n - window) {
        let width = sorted[i + window - 1] - sorted[i];
        if width < best_width {
            best_width = width;
            best = (sorted[i], sorted[i + window - 1]);
        }
    }
    Ok(best)
}

/// Median of a draw vector, as the lower-middle order statistic.
///
/// The order-statistic definition commutes exactly with monotone
/// transforms, so medians reported on the raw and probability scales stay
/// consistent under the link function.
pub fn median(draws: &[f64]) -> f64 {
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted[(sorted.len() - 1) / 2]
}

/// Full summary for one named parameter observed across chains.
pub fn summarize(parameter: &str, chains: &[Vec<f64>], hpd_prob: f64) -> Result<PosteriorSummary> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let (lo, hi) = hpd_interval(&pooled, hpd_prob)?;
    let rhat = if chains.len() >= 2 {
        gelman_rubin(chains)?
    } else {
        f64::NAN
    };
    Ok(PosteriorSummary {
        parameter: parameter.to_string(),
        median: median(&pooled),
        hpd_lower: lo,
        hpd_upper: hi,
        hpd_prob,
        rhat,
        ess: ess(chains),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::substream;
    use rand::RngExt;
    use rand_distr::{Distribution, Normal};

    fn normal_chain(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, &[9]);
        let d = Normal::new(mean, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn iid_chains_rhat_near_one() {
        let chains: Vec<Vec<f64>> = (0..4).map(|i| normal_chain(10_000, 0.0, 1.0, i)).collect();
        let r = gelman_rubin(&chains).unwrap();
        assert!(r > 0.99 && r < 1.01, "rhat = {r}");
    }

    #[test]
    fn identical_chains_rhat_one() {
        let c = normal_chain(5000, 0.0, 1.0, 17);
        let r = gelman_rubin(&[c.clone(), c]).unwrap();
        assert!((r - 1.0).abs() < 0.01, "rhat = {r}");
    }

    #[test]
    fn divergent_chains_flagged() {
        let a = normal_chain(2000, 0.0, 1.0, 3);
        let b = normal_chain(2000, 5.0, 1.0, 4);
        let r = gelman_rubin(&[a, b]).unwrap();
        assert!(r > 1.05, "rhat = {r}");
    }

    #[test]
    fn constant_chains_sentinel() {
        let a = vec![2.5; 100];
        let b = vec![2.5; 100];
        assert_eq!(gelman_rubin(&[a, b]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn rhat_input_validation() {
        assert!(gelman_rubin(&[vec![0.0; 100]]).is_err());
        assert!(gelman_rubin(&[vec![0.0; 5], vec![0.0; 5]]).is_err());
        assert!(gelman_rubin(&[vec![0.0; 20], vec![0.0; 30]]).is_err());
    }

    #[test]
    fn rhat_affine_invariant() {
        let chains: Vec<Vec<f64>> = (0..3).map(|i| normal_chain(4000, 0.3, 2.0, 40 + i)).collect();
        let r1 = gelman_rubin(&chains).unwrap();
        let scaled: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|x| -7.0 * x + 3.0).collect())
            .collect();
        let r2 = gelman_rubin(&scaled).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn hpd_uniform_width() {
        let mut rng = substream(5, &[1]);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let (lo, hi) = hpd_interval(&draws, 0.95).unwrap();
        assert!(((hi - lo) - 0.95).abs() < 0.01, "width = {}", hi - lo);
    }

    #[test]
    fn hpd_normal_endpoints() {
        let draws = normal_chain(200_000, 0.0, 1.0, 6);
        let (lo, hi) = hpd_interval(&draws, 0.95).unwrap();
        assert!((lo + 1.96).abs() < 0.05, "lo = {lo}");
        assert!((hi - 1.96).abs() < 0.05, "hi = {hi}");
    }

    #[test]
    fn hpd_point_mass() {
        let draws = vec![3.25; 500];
        let (lo, hi) = hpd_interval(&draws, 0.9).unwrap();
        assert_eq!(lo, 3.25);
        assert_eq!(hi, 3.25);
    }

    #[test]
    fn hpd_needs_draws() {
        assert!(hpd_interval(&[1.0; 99], 0.9).is_err());
    }

    #[test]
    fn ess_iid_near_n() {
        let chains: Vec<Vec<f64>> = (0..4).map(|i| normal_chain(2000, 0.0, 1.0, 50 + i)).collect();
        let e = ess(&chains);
        assert!(e > 5000.0, "ess = {e}");
    }

    #[test]
    fn ess_correlated_much_smaller() {
        // AR(1) with strong correlation
        let mut rng = substream(7, &[2]);
        let rho: f64 = 0.95;
        let innov = Normal::new(0.0, (1.0 - rho * rho).sqrt()).unwrap();
        let mut make = |seed_x: f64| {
            let mut x = seed_x;
            (0..4000)
                .map(|_| {
                    x = rho * x + innov.sample(&mut rng);
                    x
                })
                .collect::<Vec<f64>>()
        };
        let chains = vec![make(0.0), make(0.5)];
        let e = ess(&chains);
        assert!(e < 800.0, "ess = {e}");
    }
}
