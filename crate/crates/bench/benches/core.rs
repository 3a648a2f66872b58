use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pstar_bench::{correlated_scenario, midway_fixture, uniform_column};
use pstar_core::experiments::estimate_powers;
use pstar_core::merge::{harmonic_constant_closed_form, merge_harmonic, merge_simes};
use pstar_core::order::is_pstar;
use pstar_core::threshold::{make_uniform_threshold, rejection_probability};
use pstar_core::Method;

fn order_checks(c: &mut Criterion) {
    let mut g = c.benchmark_group("is_pstar");
    for n in [10, 1_000, 100_000] {
        let q = midway_fixture(n, 7);
        g.bench_with_input(BenchmarkId::from_parameter(n), &q, |b, q| {
            b.iter(|| is_pstar(black_box(q), 4096, 1e-12).unwrap())
        });
    }
    g.finish();
}

fn thresholds(c: &mut Criterion) {
    let v = make_uniform_threshold(0.01).unwrap();
    let q = midway_fixture(1_000, 7);
    c.bench_function("rejection_probability/step-1000", |b| {
        b.iter(|| rejection_probability(black_box(&q), &v))
    });
}

fn mergers(c: &mut Criterion) {
    let ps = uniform_column(500, 3);
    c.bench_function("merge_simes/500", |b| b.iter(|| merge_simes(black_box(&ps)).unwrap()));
    let ck = harmonic_constant_closed_form(500).unwrap();
    c.bench_function("merge_harmonic/500", |b| b.iter(|| merge_harmonic(black_box(&ps), ck).unwrap()));
    c.bench_function("harmonic_constant/1000", |b| {
        b.iter(|| harmonic_constant_closed_form(black_box(1000)).unwrap())
    });
}

fn power(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_powers");
    g.sample_size(10);
    let s = correlated_scenario(100, 2_000);
    g.bench_function("setting1/K=100/2000", |b| {
        b.iter(|| estimate_powers(black_box(&s), &Method::SETTING_1, 0.01).unwrap())
    });
    g.finish();
}

criterion_group!(benches, order_checks, thresholds, mergers, power);
criterion_main!(benches);
