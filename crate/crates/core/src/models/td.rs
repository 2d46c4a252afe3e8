//! Off-policy TD(0) evaluation with an expected-SARSA target.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LoggedDataset;
use crate::error::{OpeError, Result};
use crate::policy::Policy;
use crate::qmodel::{Featurizer, LinearQ, QModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdConfig {
    /// Passes over all logged transitions.
    pub epochs: usize,
    pub alpha: f64,
    pub seed: u64,
    pub init: TdInit,
}

/// Starting value of every action value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdInit {
    #[default]
    Zero,
    /// The mean discounted return-to-go over all logged steps. Pairs the
    /// data never visits keep this value instead of 0.
    MeanReturn,
}

impl Default for TdConfig {
    fn default() -> Self {
        TdConfig { epochs: 10, alpha: 0.1, seed: 0, init: TdInit::Zero }
    }
}

/// Mean over logged steps of `Σ_{u≥t} γ^{u−t} r_u`.
fn mean_return_to_go(data: &LoggedDataset) -> f64 {
    let gamma = data.gamma();
    let mut total = 0.0;
    let mut count = 0usize;
    for traj in data.trajectories() {
        let mut g = 0.0;
        for step in traj.steps.iter().rev() {
            g = step.reward + gamma * g;
            total += g;
            count += 1;
        }
    }
    total / count as f64
}

/// Fits a linear `q(x, a) = τ_a·φ(x)` toward `Q^{π_e}` from logged data.
///
/// Each update moves `q(x_t, a_t)` toward
/// `r_t + γ Σ_a π_e(a|x_{t+1}) q(x_{t+1}, a)` with step `α / ‖φ(x_t)‖²`
/// (the tabular step when `φ` is one-hot). The last step of an episode that
/// ended before the horizon bootstraps from 0; the last step of a
/// horizon-truncated episode has no successor and is skipped. Transitions are
/// visited in a seeded random order each epoch. The returned model is clipped
/// to the return bound `Σ_t γ^t R_max`.
pub fn td_off_policy_evaluate(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    featurizer: Featurizer,
    cfg: &TdConfig,
) -> Result<LinearQ> {
    let n_actions = data.n_actions();
    if pi_e.n_actions() != n_actions {
        return Err(OpeError::InvalidData("evaluation policy action count mismatch".into()));
    }
    let horizon = data.horizon();
    let gamma = data.gamma();
    let mut q = LinearQ::zeros(featurizer, n_actions);
    let d = q.featurizer.dim();
    if cfg.init == TdInit::MeanReturn {
        if !matches!(q.featurizer, Featurizer::OneHot { .. }) {
            return Err(OpeError::InvalidConfig("mean-return initialisation needs one-hot features".into()));
        }
        q.weights.fill(mean_return_to_go(data));
    }
    let mut index: Vec<(usize, usize)> = Vec::new();
    for (i, traj) in data.trajectories().iter().enumerate() {
        let len = traj.len();
        for t in 0..len {
            if t + 1 < len || len < horizon {
                index.push((i, t));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probs = vec![0.0; n_actions];
    let mut next_q = vec![0.0; n_actions];
    for epoch in 0..cfg.epochs {
        index.shuffle(&mut rng);
        for &(i, t) in &index {
            let traj = &data.trajectories()[i];
            let step = &traj.steps[t];
            let mut target = step.reward;
            if let Some(next) = traj.steps.get(t + 1) {
                pi_e.probs_into(&next.state, &mut probs);
                q.values_into(&next.state, &mut next_q);
                target += gamma * probs.iter().zip(&next_q).map(|(p, v)| p * v).sum::<f64>();
            }
            let block = &mut q.weights[step.action * d..(step.action + 1) * d];
            let (mut norm, mut current) = (0.0, 0.0);
            q.featurizer.for_each(&step.state, |j, x| {
                norm += x * x;
                current += block[j] * x;
            });
            if norm <= 0.0 {
                continue;
            }
            let scale = cfg.alpha * (target - current) / norm;
            q.featurizer.for_each(&step.state, |j, x| block[j] += scale * x);
            if !scale.is_finite() {
                return Err(OpeError::SolverDiverged(format!("TD update became non-finite in epoch {epoch}")));
            }
        }
    }
    q.clip = Some(data.return_bound());
    Ok(q)
}
