use criterion::{criterion_group, criterion_main, Criterion};
use msps_core::{optimize_mu, output_distribution, simulate, McConfig, MuRange, SourceConfig, DEFAULT_N_MAX};
use std::hint::black_box;

fn analytic(c: &mut Criterion) {
    let cfg = SourceConfig::lossy(4, 0.1, 0.5);
    c.bench_function("output_distribution m=4", |b| {
        b.iter(|| output_distribution(black_box(&cfg), DEFAULT_N_MAX).unwrap())
    });
    let dark = cfg.with_dark_probability(0.01);
    c.bench_function("output_distribution dark m=4", |b| {
        b.iter(|| output_distribution(black_box(&dark), DEFAULT_N_MAX).unwrap())
    });
    c.bench_function("optimize_mu m=4", |b| {
        b.iter(|| optimize_mu(black_box(&cfg), MuRange::default(), 1e-6).unwrap())
    });
}

fn monte_carlo(c: &mut Criterion) {
    let cfg = SourceConfig::lossy(4, 0.1, 0.5);
    let mc = McConfig::new(1 << 16, 7).with_shards(1);
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("one block", |b| b.iter(|| simulate(black_box(&cfg), &mc).unwrap()));
    group.finish();
}

criterion_group!(benches, analytic, monte_carlo);
criterion_main!(benches);
