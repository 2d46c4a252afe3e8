//! Estimator throughput on seeded bandit logs and Windy GridWorld episodes.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ope_bench::{bandit, windy};
use ope_core::{cb, rl, QModel};

fn bandit_estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("bandit");
    for n in [1_000, 10_000] {
        let f = bandit(n, 1);
        let qs: [&dyn QModel; 1] = [&f.q];
        group.bench_with_input(BenchmarkId::new("snis", n), &f, |b, f| {
            b.iter(|| cb::snis_estimate(black_box(&f.data), &f.pi_e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dr", n), &f, |b, f| {
            b.iter(|| cb::dr_estimate(black_box(&f.data), &f.q, &f.pi_e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("reg", n), &f, |b, f| {
            b.iter(|| cb::reg_estimate(black_box(&f.data), &qs, &f.pi_e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("snreg", n), &f, |b, f| {
            b.iter(|| cb::snreg_estimate(black_box(&f.data), &qs, &f.pi_e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("emp", n), &f, |b, f| {
            b.iter(|| cb::emp_estimate(black_box(&f.data), &qs, &f.pi_e).unwrap())
        });
    }
    group.finish();
}

fn rl_estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("windy");
    group.sample_size(20);
    let f = windy(250, 100, 2);
    group.bench_function("sis", |b| b.iter(|| rl::rl_is_family(black_box(&f.data), &f.pi_e, true, false).unwrap()));
    group.bench_function("dr", |b| b.iter(|| rl::rl_dr_estimate(black_box(&f.data), &f.q, &f.pi_e).unwrap()));
    for k in [0, 2] {
        group.bench_with_input(BenchmarkId::new("reg", k), &k, |b, &k| {
            b.iter(|| rl::rl_reg_estimate(black_box(&f.data), &f.q, &f.pi_e, k).unwrap())
        });
        // Some random instances have no finite dual; time the attempt either way.
        group.bench_with_input(BenchmarkId::new("emp", k), &k, |b, &k| {
            b.iter(|| rl::rl_emp_estimate(black_box(&f.data), &f.q, &f.pi_e, k).is_ok())
        });
    }
    group.finish();
}

criterion_group!(benches, bandit_estimators, rl_estimators);
criterion_main!(benches);
