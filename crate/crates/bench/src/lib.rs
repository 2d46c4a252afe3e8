//! Benchmark fixtures: seeded datasets, policies and solver instances.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ope_core::envs::{generate_trajectories, Environment, WindyGridworld};
use ope_core::qmodel::TabularQ;
use ope_core::{LoggedDataset, State, Step, TabularPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub data: LoggedDataset,
    pub pi_e: TabularPolicy,
    pub q: TabularQ,
}

fn random_policy(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> TabularPolicy {
    let rows = (0..n_states)
        .map(|_| {
            let row: Vec<f64> = (0..n_actions).map(|_| 0.1 + rng.random::<f64>()).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|p| p / s).collect()
        })
        .collect();
    TabularPolicy::new(rows).expect("rows are normalised")
}

fn random_q(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, scale: f64) -> TabularQ {
    let mut q = TabularQ::zeros(n_states, n_actions);
    q.table.iter_mut().for_each(|v| *v = scale * rng.random::<f64>());
    q
}

/// `n` bandit rounds over 20 contexts and 5 actions with Bernoulli rewards.
pub fn bandit(n: usize, seed: u64) -> Fixture {
    let (n_states, n_actions) = (20, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi_b = random_policy(&mut rng, n_states, n_actions);
    let pi_e = random_policy(&mut rng, n_states, n_actions);
    let mean = random_q(&mut rng, n_states, n_actions, 1.0);
    let q = random_q(&mut rng, n_states, n_actions, 1.0);
    let samples = (0..n)
        .map(|_| {
            let s = rng.random_range(0..n_states);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let a = pi_b.rows()[s].iter().position(|p| {
                acc += p;
                u < acc
            });
            let a = a.unwrap_or(n_actions - 1);
            let r = f64::from(u8::from(rng.random::<f64>() < mean.get(s, a)));
            Step::new(State::discrete(s), a, r)
        })
        .collect();
    let data = LoggedDataset::from_bandit(samples, Arc::new(pi_b), 1.0).expect("valid rounds");
    Fixture { data, pi_e, q }
}

/// `n` Windy GridWorld episodes of at most `horizon` steps under a random
/// behavior policy.
pub fn windy(n: usize, horizon: usize, seed: u64) -> Fixture {
    let env = WindyGridworld;
    let n_states = env.n_states();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi_b = random_policy(&mut rng, n_states, 4);
    let pi_e = random_policy(&mut rng, n_states, 4);
    let q = random_q(&mut rng, n_states, 4, -(horizon as f64));
    let data = generate_trajectories(&env, Arc::new(pi_b), n, horizon, 1.0, seed).expect("episodes");
    Fixture { data, pi_e, q }
}

/// An `n × p` design whose rows are centred, so the empirical likelihood
/// has a finite maximiser.
pub fn el_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    for mut col in g.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    g
}

/// Gaussian-ish regressors and a noisy linear target.
pub fn least_squares(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    let beta = DVector::from_fn(p, |_, _| rng.random::<f64>());
    let y = &x * beta + DVector::from_fn(n, |_, _| 0.1 * (rng.random::<f64>() - 0.5));
    (x, y)
}

/// Labelled points from `k` shifted clusters in `d` dimensions.
pub fn classification(n: usize, d: usize, k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let features = labels
        .iter()
        .map(|&y| (0..d).map(|j| if j % k == y { 1.0 } else { 0.0 } + rng.random::<f64>() - 0.5).collect())
        .collect();
    (features, labels)
}
