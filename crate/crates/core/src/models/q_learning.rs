//! Tabular ε-greedy Q-learning over discrete state ids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{derive_seed, Environment};
use crate::optim::logistic::argmax;
use crate::qmodel::TabularQ;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QLearningConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// Episodes are cut off after this many steps.
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig { episodes: 10_000, alpha: 0.5, epsilon: 0.1, gamma: 1.0, max_steps: 1000, seed: 0 }
    }
}

/// Learns action values with `Q(s,a) ← Q(s,a) + α(r + γ max_a' Q(s',a') − Q(s,a))`.
///
/// Exploration is ε-greedy; greedy ties go to the lowest action index.
/// Deterministic given `cfg.seed`.
pub fn q_learning(env: &dyn Environment, cfg: &QLearningConfig) -> crate::Result<TabularQ> {
    let n_actions = env.n_actions();
    let mut q = TabularQ::zeros(env.n_states(), n_actions);
    for episode in 0..cfg.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, episode as u64));
        let mut state = env.reset(&mut rng);
        for _ in 0..cfg.max_steps {
            let s = state.id;
            let action = if rng.random::<f64>() < cfg.epsilon {
                rng.random_range(0..n_actions)
            } else {
                argmax(q.row(s))
            };
            let tr = env.step(&state, action, &mut rng)?;
            let bootstrap = if tr.done {
                0.0
            } else {
                q.row(tr.next.id).iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            };
            let cell = &mut q.table[s * n_actions + action];
            *cell += cfg.alpha * (tr.reward + cfg.gamma * bootstrap - *cell);
            if tr.done {
                break;
            }
            state = tr.next;
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{TabularMdp, WindyGridworld};
    use crate::policy::{TableSelector, Policy, MixturePolicy};
    use crate::envs::rollout_value;
    use std::sync::Arc;

    /// State 0: action 0 stays (reward 0), action 1 reaches the terminal
    /// state 1 with reward 1.
    fn chain() -> TabularMdp {
        TabularMdp::new(
            2,
            2,
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![(0, 1.0)],
            vec![false, true],
        )
        .unwrap()
    }

    #[test]
    fn chain_converges_to_optimal_values() {
        let cfg = QLearningConfig { episodes: 2000, alpha: 0.5, epsilon: 0.3, gamma: 1.0, max_steps: 50, seed: 1 };
        let q = q_learning(&chain(), &cfg).unwrap();
        // value iteration: Q*(0,1) = 1 and, with γ = 1, Q*(0,0) = max_a Q*(0,a) = 1
        assert!((q.get(0, 1) - 1.0).abs() < 1e-6);
        assert!((q.get(0, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_episodes_zero_table() {
        let cfg = QLearningConfig { episodes: 0, ..Default::default() };
        let q = q_learning(&chain(), &cfg).unwrap();
        assert!(q.table.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = QLearningConfig { episodes: 50, ..Default::default() };
        assert_eq!(q_learning(&WindyGridworld, &cfg).unwrap(), q_learning(&WindyGridworld, &cfg).unwrap());
    }

    #[test]
    fn windy_greedy_policy_takes_fifteen_steps() {
        let cfg = QLearningConfig { episodes: 2000, ..Default::default() };
        let q = q_learning(&WindyGridworld, &cfg).unwrap();
        let greedy: Arc<dyn crate::policy::ActionSelector> =
            Arc::new(TableSelector { n_actions: 4, actions: q.greedy_actions() });
        let pi = MixturePolicy::new(greedy, 1.0).unwrap();
        assert_eq!(pi.n_actions(), 4);
        let v = rollout_value(&WindyGridworld, &pi, 1, 100, 1.0, 0).unwrap();
        assert_eq!(v.mean, -15.0);
    }
}
