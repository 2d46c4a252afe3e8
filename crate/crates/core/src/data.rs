//! Logged data: states, steps, trajectories and datasets.
//!
//! Trajectories are stored at their real length. Steps past the end of an
//! episode are implicitly an absorbing state with zero reward, identical
//! evaluation and behavior probabilities and a zero action-value, so every
//! per-step ratio there is 1 and every control-variate term vanishes.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::policy::Policy;

/// A state: a discrete index (or discretisation tag for continuous spaces)
/// plus an optional feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<f64>,
}

impl State {
    pub fn discrete(id: usize) -> Self {
        State { id, features: Vec::new() }
    }

    pub fn with_features(id: usize, features: Vec<f64>) -> Self {
        State { id, features }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: State,
    pub action: usize,
    pub reward: f64,
}

impl Step {
    pub fn new(state: State, action: usize, reward: f64) -> Self {
        Step { state, action, reward }
    }
}

/// A single logged bandit round `(x, a, r)`.
pub type BanditSample = Step;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>) -> Self {
        Trajectory { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Discounted return `Σ_t γ^t r_t`.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut disc = 1.0;
        let mut total = 0.0;
        for s in &self.steps {
            total += disc * s.reward;
            disc *= gamma;
        }
        total
    }
}

/// `n` trajectories together with the behavior policy that produced them.
#[derive(Clone)]
pub struct LoggedDataset {
    trajectories: Vec<Trajectory>,
    behavior: Arc<dyn Policy>,
    horizon: usize,
    gamma: f64,
    r_max: f64,
}

impl fmt::Debug for LoggedDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoggedDataset")
            .field("n", &self.trajectories.len())
            .field("horizon", &self.horizon)
            .field("gamma", &self.gamma)
            .field("r_max", &self.r_max)
            .finish()
    }
}

impl LoggedDataset {
    /// Validates and wraps logged trajectories.
    ///
    /// Rewards must satisfy `|r| <= r_max`; environments with negative rewards
    /// are admitted as-is and can be mapped into `[0, r_max]` with
    /// [`LoggedDataset::affine_rewards`].
    pub fn new(
        trajectories: Vec<Trajectory>,
        behavior: Arc<dyn Policy>,
        horizon: usize,
        gamma: f64,
        r_max: f64,
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(OpeError::EmptyInput);
        }
        if horizon == 0 {
            return Err(OpeError::InvalidData("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(OpeError::InvalidData(format!("gamma {gamma} outside [0, 1]")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(OpeError::InvalidData(format!("r_max {r_max} must be positive")));
        }
        let n_actions = behavior.n_actions();
        let mut probs = vec![0.0; n_actions];
        for (i, traj) in trajectories.iter().enumerate() {
            if traj.is_empty() || traj.len() > horizon {
                return Err(OpeError::InvalidData(format!(
                    "trajectory {i} has length {} (horizon {horizon})",
                    traj.len()
                )));
            }
            for step in &traj.steps {
                if step.action >= n_actions {
                    return Err(OpeError::InvalidAction { action: step.action, n_actions });
                }
                if !step.reward.is_finite() || step.reward.abs() > r_max * (1.0 + 1e-12) {
                    return Err(OpeError::InvalidData(format!(
                        "trajectory {i}: reward {} exceeds r_max {r_max}",
                        step.reward
                    )));
                }
                behavior.probs_into(&step.state, &mut probs);
                if probs[step.action] <= 0.0 {
                    return Err(OpeError::ZeroPropensity {
                        state: step.state.id,
                        action: step.action,
                    });
                }
            }
        }
        Ok(LoggedDataset { trajectories, behavior, horizon, gamma, r_max })
    }

    /// A `T = 1` dataset from bandit rounds.
    pub fn from_bandit(samples: Vec<BanditSample>, behavior: Arc<dyn Policy>, r_max: f64) -> Result<Self> {
        let trajs = samples.into_iter().map(|s| Trajectory::new(vec![s])).collect();
        LoggedDataset::new(trajs, behavior, 1, 1.0, r_max)
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn behavior(&self) -> &dyn Policy {
        self.behavior.as_ref()
    }

    pub fn behavior_arc(&self) -> Arc<dyn Policy> {
        Arc::clone(&self.behavior)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_actions(&self) -> usize {
        self.behavior.n_actions()
    }

    /// `Σ_{t<T} γ^t R_max`, the largest attainable return.
    pub fn return_bound(&self) -> f64 {
        crate::discount_mass(self.horizon, self.gamma) * self.r_max
    }

    /// Replaces every logged state by `f(state)`, e.g. to cache a feature
    /// map once instead of re-evaluating it on each pass.
    pub fn map_states(&self, f: impl Fn(&State) -> State) -> Result<Self> {
        let trajs = self
            .trajectories
            .iter()
            .map(|t| Trajectory {
                steps: t.steps.iter().map(|s| Step::new(f(&s.state), s.action, s.reward)).collect(),
            })
            .collect();
        LoggedDataset::new(trajs, Arc::clone(&self.behavior), self.horizon, self.gamma, self.r_max)
    }

    /// Maps every logged reward through `r ↦ scale·r + shift`.
    ///
    /// Only real steps are transformed; the implicit absorbing padding keeps
    /// reward zero. `new_r_max` is the declared bound of the mapped rewards.
    pub fn affine_rewards(&self, scale: f64, shift: f64, new_r_max: f64) -> Result<Self> {
        let trajs = self
            .trajectories
            .iter()
            .map(|t| Trajectory {
                steps: t
                    .steps
                    .iter()
                    .map(|s| Step::new(s.state.clone(), s.action, scale * s.reward + shift))
                    .collect(),
            })
            .collect();
        LoggedDataset::new(trajs, Arc::clone(&self.behavior), self.horizon, self.gamma, new_r_max)
    }
}
