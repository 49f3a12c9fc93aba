use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ifr_core::distributions::{
    fit_beta_to_interval, nchg_log_pmf, nchg_sample, NchgParams,
};

fn bench_nchg_pmf(c: &mut Criterion) {
    let small = NchgParams::new(430, 2_631, 190, 3.0).unwrap();
    c.bench_function("nchg_log_pmf_town_scale", |b| {
        b.iter(|| nchg_log_pmf(black_box(24), black_box(&small)).unwrap())
    });

    let large = NchgParams::new(1_000_000, 79_000_000, 2_000_000, 5.0).unwrap();
    c.bench_function("nchg_log_pmf_national_scale", |b| {
        b.iter(|| nchg_log_pmf(black_box(120_000), black_box(&large)).unwrap())
    });
}

fn bench_nchg_sample(c: &mut Criterion) {
    let params = NchgParams::new(40_000, 160_000, 10_000, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    c.bench_function("nchg_sample_10k_draws", |b| {
        b.iter(|| nchg_sample(black_box(&params), &mut rng))
    });
}

fn bench_beta_fit(c: &mut Criterion) {
    c.bench_function("fit_beta_to_interval", |b| {
        b.iter(|| fit_beta_to_interval(black_box(0.1231), black_box(0.2440)).unwrap())
    });
}

criterion_group!(benches, bench_nchg_pmf, bench_nchg_sample, bench_beta_fit);
criterion_main!(benches);
