//! Trajectory generation and Monte Carlo value estimates.
//!
//! Episode `i` draws from its own generator seeded by
//! `derive_seed(seed, i)`, so datasets do not depend on evaluation order.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{LoggedDataset, Step, Trajectory};
use crate::envs::Environment;
use crate::error::Result;
use crate::policy::{sample_index, Policy};

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A child seed for stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xd605_bbb5_8c8a_bbb7))
}

/// Runs one episode of at most `horizon` steps.
pub fn run_episode(env: &dyn Environment, pi: &dyn Policy, horizon: usize, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let mut state = env.reset(rng);
    let mut steps = Vec::with_capacity(horizon.min(1024));
    let mut probs = vec![0.0; env.n_actions()];
    for _ in 0..horizon {
        pi.probs_into(&state, &mut probs);
        let action = sample_index(&probs, rng.random());
        let tr = env.step(&state, action, rng)?;
        steps.push(Step::new(state, action, tr.reward));
        if tr.done {
            break;
        }
        state = tr.next;
    }
    Ok(Trajectory::new(steps))
}

/// `n` independent episodes of `pi_b`, truncated at `horizon`.
pub fn generate_trajectories(
    env: &dyn Environment,
    pi_b: Arc<dyn Policy>,
    n: usize,
    horizon: usize,
    gamma: f64,
    seed: u64,
) -> Result<LoggedDataset> {
    let trajectories = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            run_episode(env, pi_b.as_ref(), horizon, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    LoggedDataset::new(trajectories, pi_b, horizon, gamma, env.reward_bound())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutValue {
    pub mean: f64,
    pub std_error: f64,
}

/// Sample mean and standard error of the discounted return over
/// `n_rollouts` episodes.
pub fn rollout_value(
    env: &dyn Environment,
    pi: &dyn Policy,
    n_rollouts: usize,
    horizon: usize,
    gamma: f64,
    seed: u64,
) -> Result<RolloutValue> {
    let mut returns = Vec::with_capacity(n_rollouts);
    for i in 0..n_rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        returns.push(run_episode(env, pi, horizon, &mut rng)?.discounted_return(gamma));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std_error = if returns.len() > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(RolloutValue { mean, std_error })
}
