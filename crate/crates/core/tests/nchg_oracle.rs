//! NCHG correctness against an independent enumeration of the sequential
//! urn process, plus sampler-vs-pmf consistency.

use std::collections::HashMap;

use ifr_core::distributions::{
    hypergeometric_ln_pmf, nchg_log_pmf, nchg_sample, NchgParams,
};
use ifr_core::special::gamma_q;
use ifr_core::streams::substream;

/// Exact probability of drawing `x` cases in `t` biased draws from an urn
/// with `c` cases and `m` non-cases, by recursing over the first draw.
fn urn_prob(
    x: i64,
    c: u64,
    m: u64,
    t: u64,
    phi: f64,
    memo: &mut HashMap<(i64, u64, u64, u64), f64>,
) -> f64 {
    if x < 0 || (x as u64) > t.min(c) || t - (x as u64) > m {
        return 0.0;
    }
    if t == 0 {
        return 1.0; // x == 0 by the guard above
    }
    let key = (x, c, m, t);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let total = phi * c as f64 + m as f64;
    let mut p = 0.0;
    if c > 0 {
        p += (phi * c as f64 / total) * urn_prob(x - 1, c - 1, m, t - 1, phi, memo);
    }
    if m > 0 {
        p += (m as f64 / total) * urn_prob(x, c, m - 1, t - 1, phi, memo);
    }
    memo.insert(key, p);
    p
}

fn urn(x: u64, c: u64, m: u64, t: u64, phi: f64) -> f64 {
    urn_prob(x as i64, c, m, t, phi, &mut HashMap::new())
}

#[test]
fn pmf_matches_urn_enumeration_small_instances() {
    // every urn with P <= 12, T <= 6 and phi in {0.5, 1, 2, 5}
    let mut worst: f64 = 0.0;
    for c in 0..=12u64 {
        for m in 0..=(12 - c) {
            if c + m == 0 {
                continue;
            }
            for t in 1..=6.min(c + m) {
                for &phi in &[0.5, 1.0, 2.0, 5.0] {
                    let params = NchgParams::new(c, m, t, phi).unwrap();
                    for x in params.support_min()..=params.support_max() {
                        let got = nchg_log_pmf(x, &params).unwrap().exp();
                        let want = urn(x, c, m, t, phi);
                        worst = worst.max((got - want).abs());
                    }
                }
            }
        }
    }
    assert!(worst < 1e-6, "max |pmf - urn| = {worst}");
}

#[test]
fn derived_example_matches_enumeration() {
    // x=2 of (C=3, M=2, T=2, phi=2): both routes agree
    let oracle = urn(2, 3, 2, 2, 2.0);
    let pmf = nchg_log_pmf(2, &NchgParams::new(3, 2, 2, 2.0).unwrap())
        .unwrap()
        .exp();
    assert!((oracle - 0.5).abs() < 1e-15, "oracle deviates: {oracle}");
    assert!((pmf - oracle).abs() < 1e-9);
}

#[test]
fn normalization_across_scales() {
    let cases = [
        (5u64, 7u64, 4u64, 3.0),
        (10, 10, 8, 0.5),
        (100, 400, 50, 2.0),
        (2_000, 8_000, 500, 4.0),
        (200, 800, 100, 4.0),
    ];
    for (c, m, t, phi) in cases {
        let params = NchgParams::new(c, m, t, phi).unwrap();
        let total: f64 = (params.support_min()..=params.support_max())
            .map(|x| nchg_log_pmf(x, &params).unwrap().exp())
            .sum();
        assert!(
            (total - 1.0).abs() < 1e-8,
            "({c},{m},{t},{phi}) sums to {total}"
        );
    }
}

#[test]
fn central_phi_matches_hypergeometric_everywhere() {
    for &(c, m, t) in &[(6u64, 9u64, 5u64), (40, 60, 20), (3, 3, 3)] {
        let params = NchgParams::new(c, m, t, 1.0).unwrap();
        for x in params.support_min()..=params.support_max() {
            let got = nchg_log_pmf(x, &params).unwrap();
            let want = hypergeometric_ln_pmf(x, c, m, t);
            assert!(
                (got - want).abs() < 1e-10,
                "({c},{m},{t}) x={x}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn sampler_matches_pmf_chi_square() {
    // empirical pmf of 1e5 draws vs exp(log pmf), chi-square GOF p > 0.001
    let params = NchgParams::new(200, 800, 100, 4.0).unwrap();
    let mut rng = substream(99, &[7]);
    let n_draws = 100_000usize;
    let lo = params.support_min() as usize;
    let hi = params.support_max() as usize;
    let mut counts = vec![0u64; hi - lo + 1];
    for _ in 0..n_draws {
        counts[nchg_sample(&params, &mut rng) as usize - lo] += 1;
    }
    let expected: Vec<f64> = (lo..=hi)
        .map(|x| nchg_log_pmf(x as u64, &params).unwrap().exp() * n_draws as f64)
        .collect();

    // pool cells until each expected count is at least 5
    let mut chi2 = 0.0;
    let mut dof: i64 = -1;
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for i in 0..expected.len() {
        acc_obs += counts[i] as f64;
        acc_exp += expected[i];
        let remaining: f64 = expected[i + 1..].iter().sum();
        if acc_exp >= 5.0 && remaining >= 5.0 {
            chi2 += (acc_obs - acc_exp).powi(2) / acc_exp;
            dof += 1;
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    // final pooled cell
    if acc_exp > 0.0 {
        chi2 += (acc_obs - acc_exp).powi(2) / acc_exp;
        dof += 1;
    }
    assert!(dof > 3, "degenerate binning");
    let p_value = gamma_q(dof as f64 / 2.0, chi2 / 2.0);
    assert!(
        p_value > 0.001,
        "chi2 = {chi2:.2} on {dof} dof, p = {p_value:.5}"
    );
}

#[test]
fn whole_urn_draw_is_point_mass() {
    // T = P: log pmf is 0 at x = C (B = 0 branch)
    let params = NchgParams::new(4, 3, 7, 2.5).unwrap();
    assert_eq!(nchg_log_pmf(4, &params).unwrap(), 0.0);
}
