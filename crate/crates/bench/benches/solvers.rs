//! Newton on the empirical likelihood, normal-equation least squares,
//! penalised logistic regression and MDR's SGD.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use ope_bench::{bandit, classification, el_design, least_squares};
use ope_core::control::{fit_mdr, LinearControl};
use ope_core::optim::{
    logistic_fit, maximize_concave, solve_least_squares, EmpiricalLikelihood, LeastSquaresProblem, LogisticConfig,
    NewtonConfig, Penalty, SgdConfig,
};
use ope_core::qmodel::Featurizer;

fn newton(c: &mut Criterion) {
    let mut group = c.benchmark_group("empirical_likelihood");
    for p in [2, 6, 12] {
        let el = EmpiricalLikelihood::new(el_design(5_000, p, 3));
        group.bench_with_input(BenchmarkId::from_parameter(p), &el, |b, el| {
            b.iter(|| maximize_concave(black_box(el), DVector::zeros(p), &NewtonConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn normal_equations(c: &mut Criterion) {
    let mut group = c.benchmark_group("least_squares");
    for p in [2, 6, 12] {
        let (x, y) = least_squares(5_000, p, 4);
        let problem = LeastSquaresProblem::new(x, y);
        group.bench_with_input(BenchmarkId::from_parameter(p), &problem, |b, problem| {
            b.iter(|| solve_least_squares(black_box(problem)).unwrap())
        });
    }
    group.finish();
}

fn logistic(c: &mut Criterion) {
    let mut group = c.benchmark_group("logistic");
    group.sample_size(10);
    let (x, y) = classification(1_000, 36, 6, 5);
    for penalty in [Penalty::L1, Penalty::L2] {
        let cfg = LogisticConfig::new(penalty, 1.0);
        group.bench_function(format!("{penalty:?}"), |b| b.iter(|| logistic_fit(black_box(&x), &y, 6, &cfg).unwrap()));
    }
    group.finish();
}

fn mdr_sgd(c: &mut Criterion) {
    let f = bandit(2_000, 6);
    let control = LinearControl { featurizer: Featurizer::OneHot { n_states: 20 }, n_actions: 5 };
    let cfg = SgdConfig { epochs: 20, ..SgdConfig::default() };
    c.bench_function("mdr_sgd", |b| b.iter(|| fit_mdr(black_box(&f.data), &f.pi_e, &control, &cfg, false).unwrap()));
}

criterion_group!(benches, newton, normal_equations, logistic, mdr_sgd);
criterion_main!(benches);
