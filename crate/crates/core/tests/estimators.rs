//! Estimator behaviour checked against exact enumeration and Monte Carlo.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ope_core::cb;
use ope_core::envs::{generate_trajectories, TabularMdp};
use ope_core::qmodel::TabularQ;
use ope_core::rl;
use ope_core::terms::{control_variate_g, per_trajectory_dr_value, TrajectoryTerms};
use ope_core::{ControlVariateParams, CvRole, LoggedDataset, QModel, State, Step, TabularPolicy, Trajectory};

fn random_policy(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> TabularPolicy {
    let rows = (0..n_states)
        .map(|_| {
            let row: Vec<f64> = (0..n_actions).map(|_| 0.05 + rng.random::<f64>()).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|p| p / s).collect()
        })
        .collect();
    TabularPolicy::new(rows).unwrap()
}

fn random_q(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, hi: f64) -> TabularQ {
    let mut q = TabularQ::zeros(n_states, n_actions);
    q.table.iter_mut().for_each(|v| *v = hi * rng.random::<f64>());
    q
}

/// A dense random MDP without terminal states.
fn random_mdp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> TabularMdp {
    let transitions = (0..n_states * n_actions)
        .map(|_| {
            let row: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>()).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|p| p / s).enumerate().collect()
        })
        .collect();
    let rewards = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(n_states, n_actions, transitions, rewards, vec![(0, 1.0)], vec![false; n_states]).unwrap()
}

fn weighted_moments(values: &[(f64, f64)]) -> (f64, f64) {
    let mean: f64 = values.iter().map(|(v, p)| v * p).sum();
    let var = values.iter().map(|(v, p)| p * (v - mean).powi(2)).sum();
    (mean, var)
}

#[test]
fn control_variate_g_has_zero_mean_under_behavior() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mdp = random_mdp(&mut rng, 3, 2);
    let pi_b = random_policy(&mut rng, 3, 2);
    let pi_e = random_policy(&mut rng, 3, 2);
    let trajs = mdp.enumerate_trajectories(&pi_b, 4);
    for _ in 0..10 {
        let q = random_q(&mut rng, 3, 2, 4.0);
        let qs: [&dyn QModel; 1] = [&q];
        let blocks = (0..3).map(|_| vec![rng.random::<f64>() - 0.5, 2.0 * rng.random::<f64>()]).collect();
        let params = ControlVariateParams::new(CvRole::Fixed, blocks);
        let mean: f64 = trajs
            .iter()
            .map(|(t, p)| p * control_variate_g(t, &params, &qs, &pi_e, &pi_b, 0.9).unwrap())
            .sum();
        assert!(mean.abs() < 1e-12, "{mean}");
    }
}

#[test]
fn bandit_is_and_dr_are_unbiased_by_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mdp = random_mdp(&mut rng, 4, 3);
    let pi_b = random_policy(&mut rng, 4, 3);
    let pi_e = random_policy(&mut rng, 4, 3);
    let truth = mdp.exact_policy_value(&pi_e, 1, 1.0);
    let q = random_q(&mut rng, 4, 3, 1.0);
    let (mut is, mut dr) = (0.0, 0.0);
    for (traj, p) in mdp.enumerate_trajectories(&pi_b, 1) {
        let data = LoggedDataset::from_bandit(traj.steps, Arc::new(pi_b.clone()), 1.0).unwrap();
        is += p * cb::is_estimate(&data, &pi_e).unwrap().estimate;
        dr += p * cb::dr_estimate(&data, &q, &pi_e).unwrap().estimate;
    }
    assert!((is - truth).abs() < 1e-12);
    assert!((dr - truth).abs() < 1e-12);
}

#[test]
fn dr_with_exact_q_beats_stepwise_is_in_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let horizon = 4;
    let gamma = 0.95;
    let base = random_mdp(&mut rng, 3, 2);
    let mdp = base.unrolled(horizon);
    let pi_b = TabularMdp::unroll_policy(&random_policy(&mut rng, 3, 2), horizon);
    let pi_e = TabularMdp::unroll_policy(&random_policy(&mut rng, 3, 2), horizon);
    let truth = base.exact_policy_value(&TabularPolicy::new(pi_e.rows()[..3].to_vec()).unwrap(), horizon, gamma);
    let q = mdp.q_values(&pi_e, horizon, gamma).swap_remove(0);
    let qs: [&dyn QModel; 1] = [&q];
    let dr_params = ControlVariateParams::shared(vec![0.0, 1.0]);

    let trajs = mdp.enumerate_trajectories(&pi_b, horizon);
    let mut sis = Vec::new();
    let mut dr = Vec::new();
    for (t, p) in &trajs {
        sis.push((TrajectoryTerms::new(t, &pi_e, &pi_b, gamma, &[]).unwrap().sis_value(), *p));
        dr.push((per_trajectory_dr_value(t, &dr_params, &qs, &pi_e, &pi_b, gamma).unwrap(), *p));
    }
    let (sis_mean, sis_var) = weighted_moments(&sis);
    let (dr_mean, dr_var) = weighted_moments(&dr);
    assert!((sis_mean - truth).abs() < 1e-10);
    assert!((dr_mean - truth).abs() < 1e-10);
    assert!(dr_var < sis_var, "DR variance {dr_var} vs step-wise IS {sis_var}");
}

fn bandit_data(rng: &mut ChaCha8Rng, n: usize) -> (LoggedDataset, TabularPolicy, TabularQ) {
    let pi_b = random_policy(rng, 6, 3);
    let pi_e = random_policy(rng, 6, 3);
    let q = random_q(rng, 6, 3, 1.0);
    let samples = (0..n)
        .map(|_| {
            let s = rng.random_range(0..6);
            let a = ope_core::policy::sample_index(&pi_b.rows()[s], rng.random());
            Step::new(State::discrete(s), a, rng.random())
        })
        .collect();
    (LoggedDataset::from_bandit(samples, Arc::new(pi_b), 1.0).unwrap(), pi_e, q)
}

#[test]
fn self_normalised_and_emp_estimates_are_affine_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (a, b) = (2.0, 0.5);
    for _ in 0..5 {
        let (data, pi_e, q) = bandit_data(&mut rng, 300);
        let mapped = data.affine_rewards(a, b, a + b).unwrap();
        let mut q2 = q.clone();
        q2.table.iter_mut().for_each(|v| *v = a * *v + b);
        let (qs, qs2): ([&dyn QModel; 1], [&dyn QModel; 1]) = ([&q], [&q2]);

        let snis = cb::snis_estimate(&data, &pi_e).unwrap().estimate;
        let snis2 = cb::snis_estimate(&mapped, &pi_e).unwrap().estimate;
        assert!((snis2 - (a * snis + b)).abs() < 1e-10);

        let sndr = cb::sndr_estimate(&data, &q, &pi_e).unwrap().estimate;
        let sndr2 = cb::sndr_estimate(&mapped, &q2, &pi_e).unwrap().estimate;
        assert!((sndr2 - (a * sndr + b)).abs() < 1e-10);

        let emp = cb::emp_estimate(&data, &qs, &pi_e).unwrap().estimate;
        let emp2 = cb::emp_estimate(&mapped, &qs2, &pi_e).unwrap().estimate;
        assert!((emp2 - (a * emp + b)).abs() < 1e-8, "{emp2} vs {}", a * emp + b);
    }
}

#[test]
fn reg_scales_with_the_rewards() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (data, pi_e, q) = bandit_data(&mut rng, 300);
    let scaled = data.affine_rewards(3.0, 0.0, 3.0).unwrap();
    let mut q3 = q.clone();
    q3.table.iter_mut().for_each(|v| *v *= 3.0);
    let (qs, qs3): ([&dyn QModel; 1], [&dyn QModel; 1]) = ([&q], [&q3]);
    let reg = cb::reg_estimate(&data, &qs, &pi_e).unwrap().estimate;
    let reg3 = cb::reg_estimate(&scaled, &qs3, &pi_e).unwrap().estimate;
    assert!((reg3 - 3.0 * reg).abs() < 1e-10);
}

#[test]
fn multi_step_estimators_converge_to_the_true_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (horizon, gamma) = (5, 0.9);
    let mdp = random_mdp(&mut rng, 3, 2);
    let pi_b = random_policy(&mut rng, 3, 2);
    let pi_e = random_policy(&mut rng, 3, 2);
    let truth = mdp.exact_policy_value(&pi_e, horizon, gamma);
    let data = generate_trajectories(&mdp, Arc::new(pi_b), 20_000, horizon, gamma, 99).unwrap();
    let q = random_q(&mut rng, 3, 2, 3.0);
    let estimates = [
        rl::rl_is_family(&data, &pi_e, true, false).unwrap(),
        rl::rl_is_family(&data, &pi_e, true, true).unwrap(),
        rl::rl_dr_estimate(&data, &q, &pi_e).unwrap(),
        rl::rl_reg_estimate(&data, &q, &pi_e, 2).unwrap(),
        rl::rl_emp_estimate(&data, &q, &pi_e, 2).unwrap(),
    ];
    for r in estimates {
        assert!((r.estimate - truth).abs() < 0.05, "{}: {} vs {truth}", r.method, r.estimate);
    }
}

#[test]
fn short_trajectories_are_padded_with_unit_ratios() {
    let pi_b = TabularPolicy::new(vec![vec![0.5, 0.5]]).unwrap();
    let pi_e = TabularPolicy::new(vec![vec![0.8, 0.2]]).unwrap();
    let traj = Trajectory::new(vec![Step::new(State::discrete(0), 0, 1.0)]);
    let full = Trajectory::new(vec![Step::new(State::discrete(0), 0, 1.0), Step::new(State::discrete(0), 1, 0.0)]);
    let data = LoggedDataset::new(vec![traj, full], Arc::new(pi_b), 2, 1.0, 1.0).unwrap();
    // Both trajectories earn their reward at t = 0 with ratio 1.6.
    let sis = rl::rl_is_family(&data, &pi_e, true, false).unwrap().estimate;
    assert!((sis - 1.6).abs() < 1e-12);
}
