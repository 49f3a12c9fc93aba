//! The projection-based QP checked against an exhaustive active-set oracle,
//! plus structural properties of the identification intervals.

use ifr_core::identification::{
    global_interval, global_interval_tau0, group_interval, ifr_of_phi, min_variance_at_mean,
    GlobalProblem, GroupSignal, IdentInterval,
};
use ifr_core::streams::substream;
use proptest::prelude::*;

use rand::RngExt;

/// Exhaustive QP oracle: enumerate every assignment of coordinates to
/// {lower bound, upper bound, free}; free coordinates share one value that
/// meets the mean constraint. Every feasible candidate is a feasible QP
/// point and the optimal active set is among them, so the minimum over
/// candidates is the exact optimum.
fn qp_oracle(x: f64, boxes: &[IdentInterval]) -> f64 {
    let k = boxes.len();
    let mut best = f64::INFINITY;
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let mut digits = code;
        let mut sum_fixed = 0.0;
        let mut free = Vec::new();
        let mut f = vec![0.0; k];
        for i in 0..k {
            match digits % 3 {
                0 => {
                    f[i] = boxes[i].lower;
                    sum_fixed += f[i];
                }
                1 => {
                    f[i] = boxes[i].upper;
                    sum_fixed += f[i];
                }
                _ => free.push(i),
            }
            digits /= 3;
        }
        if free.is_empty() {
            if (sum_fixed / k as f64 - x).abs() > 1e-9 {
                continue;
            }
        } else {
            let value = (k as f64 * x - sum_fixed) / free.len() as f64;
            let mut ok = true;
            for &i in &free {
                if value < boxes[i].lower - 1e-12 || value > boxes[i].upper + 1e-12 {
                    ok = false;
                    break;
                }
                f[i] = value;
            }
            if !ok {
                continue;
            }
        }
        let var = f.iter().map(|fi| (fi - x) * (fi - x)).sum::<f64>() / k as f64;
        best = best.min(var);
    }
    best
}

#[test]
fn projection_matches_oracle_on_random_instances() {
    let mut rng = substream(2718, &[0]);
    for instance in 0..50 {
        let k = 2 + (instance % 5);
        let boxes: Vec<IdentInterval> = (0..k)
            .map(|_| {
                let lo = rng.random::<f64>() * 2.0 - 1.0;
                let width = rng.random::<f64>() * 1.5 + 1e-3;
                IdentInterval {
                    lower: lo,
                    upper: lo + width,
                }
            })
            .collect();
        let span_lo = boxes.iter().map(|b| b.lower).sum::<f64>() / k as f64;
        let span_hi = boxes.iter().map(|b| b.upper).sum::<f64>() / k as f64;
        for _ in 0..4 {
            let x = span_lo + rng.random::<f64>() * (span_hi - span_lo);
            let fast = min_variance_at_mean(x, &boxes);
            let slow = qp_oracle(x, &boxes);
            assert!(
                (fast - slow).abs() < 1e-8,
                "instance {instance}: projection {fast} vs oracle {slow} at x={x}"
            );
        }
        // and an infeasible point
        let fast = min_variance_at_mean(span_hi + 1.0, &boxes);
        assert_eq!(fast, f64::INFINITY);
    }
}

fn table1_signals(gamma_col: &[f64]) -> Vec<GroupSignal> {
    let ir: [f64; 12] = [
        0.140, 0.206, 0.303, 0.190, 0.159, 0.132, 0.137, 0.526, 0.212, 0.160, 0.164, 0.245,
    ];
    ir.iter()
        .zip(gamma_col)
        .map(|(&ir_k, &phi_k)| {
            let a = 0.02 * ir_k;
            let b = 1.0 - (1.0 - ir_k).powf(phi_k);
            GroupSignal::new(a, b, 1.0, 40.0).unwrap()
        })
        .collect()
}

const PHI_G11: [f64; 12] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0];

#[test]
fn heterogeneity_cap_is_monotone() {
    let signals = table1_signals(&PHI_G11);
    let mut prev: Option<IdentInterval> = None;
    for tau_bar in [0.0, 0.001, 0.002, 0.004, 0.008] {
        let problem = GlobalProblem::new(signals.clone(), tau_bar).unwrap();
        let interval = global_interval(&problem).unwrap().expect("feasible");
        if let Some(inner) = prev {
            assert!(
                interval.lower <= inner.lower + 1e-9 && interval.upper >= inner.upper - 1e-9,
                "tau_bar {tau_bar}: [{}, {}] does not contain [{}, {}]",
                interval.lower,
                interval.upper,
                inner.lower,
                inner.upper
            );
        }
        prev = Some(interval);
    }
}

#[test]
fn halving_grid_step_moves_endpoints_at_most_one_step() {
    let signals = table1_signals(&PHI_G11);
    let mut coarse = GlobalProblem::new(signals.clone(), 0.002).unwrap();
    coarse.grid_step = 2e-4;
    let mut fine = GlobalProblem::new(signals, 0.002).unwrap();
    fine.grid_step = 1e-4;
    let a = global_interval(&coarse).unwrap().unwrap();
    let b = global_interval(&fine).unwrap().unwrap();
    assert!((a.lower - b.lower).abs() <= 2e-4 + 1e-12);
    assert!((a.upper - b.upper).abs() <= 2e-4 + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// When the generating phi values respect the investigator bounds and
    /// the true IFR spread respects the cap, the true average IFR lies in
    /// the global identification interval.
    #[test]
    fn truth_always_inside_global_interval(
        seed in 0u64..1000,
        k in 2usize..8,
        tau_scale in 0.0f64..0.8,
    ) {
        let mut rng = substream(seed, &[42]);
        let base_ifr = 0.005 + rng.random::<f64>() * 0.03;
        let spread = 0.002 * tau_scale;
        let ifr: Vec<f64> = (0..k)
            .map(|_| (base_ifr + spread * (rng.random::<f64>() * 2.0 - 1.0)).max(1e-4))
            .collect();
        let mean_ifr = ifr.iter().sum::<f64>() / k as f64;
        let sd = (ifr.iter().map(|v| (v - mean_ifr).powi(2)).sum::<f64>()
            / (k as f64 - 1.0))
            .sqrt();

        let phi_lo = 1.0;
        let phi_hi = 30.0;
        let signals: Vec<GroupSignal> = ifr
            .iter()
            .map(|&ifr_k| {
                let ir = 0.05 + rng.random::<f64>() * 0.4;
                let phi = phi_lo + rng.random::<f64>() * (phi_hi - phi_lo);
                GroupSignal::new(
                    ifr_k * ir,
                    1.0 - (1.0 - ir).powf(phi),
                    phi_lo,
                    phi_hi,
                ).unwrap()
            })
            .collect();

        let tau_bar = (sd * 1.10).max(1e-6);
        let problem = GlobalProblem::new(signals, tau_bar).unwrap();
        let interval = global_interval(&problem).unwrap();
        let interval = interval.expect("interval must be nonempty when truth is admissible");
        // allow one grid step of slack at the endpoints
        prop_assert!(
            interval.lower - 1e-4 <= mean_ifr && mean_ifr <= interval.upper + 1e-4,
            "true mean {} outside [{}, {}]",
            mean_ifr, interval.lower, interval.upper
        );
    }

    /// Each group interval always contains its generating IFR.
    #[test]
    fn group_interval_contains_truth(
        seed in 0u64..1000,
    ) {
        let mut rng = substream(seed, &[43]);
        let ifr = 0.001 + rng.random::<f64>() * 0.05;
        let ir = 0.02 + rng.random::<f64>() * 0.5;
        let phi = 1.0 + rng.random::<f64>() * 20.0;
        let signal = GroupSignal::new(
            ifr * ir,
            1.0 - (1.0 - ir).powf(phi),
            1.0,
            25.0,
        ).unwrap();
        let interval = group_interval(&signal).unwrap();
        prop_assert!(interval.lower <= ifr + 1e-12 && ifr <= interval.upper + 1e-12);
        // and the inversion identity: ifr_of_phi at the true phi recovers ifr
        let back = ifr_of_phi(signal.a, signal.b, phi).unwrap();
        prop_assert!((back - ifr).abs() < 1e-10);
    }
}

#[test]
fn tau0_special_case_equals_intersection() {
    let signals = table1_signals(&PHI_G11);
    let boxes: Vec<IdentInterval> = signals.iter().map(|s| group_interval(s).unwrap()).collect();
    let problem = GlobalProblem::new(signals, 0.0).unwrap();
    assert_eq!(
        global_interval(&problem).unwrap(),
        global_interval_tau0(&boxes)
    );
}
