//! Stochastic policies over a finite action set.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::State;
use crate::error::{OpeError, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// A conditional distribution `π(a|x)` that can be queried exactly.
pub trait Policy: Send + Sync + Debug {
    fn n_actions(&self) -> usize;

    /// Writes `π(·|state)` into `out` (length `n_actions`).
    fn probs_into(&self, state: &State, out: &mut [f64]);

    fn probs(&self, state: &State) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions()];
        self.probs_into(state, &mut out);
        out
    }

    fn prob(&self, state: &State, action: usize) -> f64 {
        self.probs(state)[action]
    }
}

/// A deterministic decision rule, e.g. a greedy Q-table or a classifier.
pub trait ActionSelector: Send + Sync + Debug {
    fn n_actions(&self) -> usize;
    fn select(&self, state: &State) -> usize;
}

/// Per-state probability rows indexed by `State::id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_actions: usize,
    probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = probs.first().map(Vec::len).unwrap_or(0);
        if n_actions == 0 {
            return Err(OpeError::InvalidData("policy table has no actions".into()));
        }
        for (s, row) in probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(OpeError::InvalidData(format!("policy row {s} has wrong width")));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(OpeError::InvalidData(format!("policy row {s} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(OpeError::InvalidData(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(TabularPolicy { n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularPolicy { n_actions, probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states] }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// Re-validates a table read from an external source.
    pub fn validated(self) -> Result<Self> {
        TabularPolicy::new(self.probs)
    }
}

impl Policy for TabularPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, state: &State, out: &mut [f64]) {
        out.copy_from_slice(&self.probs[state.id]);
    }
}

/// `π_u`, uniform over actions everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPolicy {
    pub n_actions: usize,
}

impl Policy for UniformPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, _state: &State, out: &mut [f64]) {
        out.fill(1.0 / self.n_actions as f64);
    }
}

/// Greedy actions stored per state id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSelector {
    pub n_actions: usize,
    pub actions: Vec<usize>,
}

impl ActionSelector for TableSelector {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn select(&self, state: &State) -> usize {
        self.actions[state.id]
    }
}

/// `α·π_d + (1 − α)·π_u` for a deterministic `π_d`.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    base: Arc<dyn ActionSelector>,
    alpha: f64,
}

impl MixturePolicy {
    /// `alpha` is the weight on the deterministic policy.
    pub fn new(base: Arc<dyn ActionSelector>, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(OpeError::InvalidConfig(format!("mixture weight {alpha} outside [0, 1]")));
        }
        Ok(MixturePolicy { base, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn base(&self) -> &dyn ActionSelector {
        self.base.as_ref()
    }
}

impl Policy for MixturePolicy {
    fn n_actions(&self) -> usize {
        self.base.n_actions()
    }

    fn probs_into(&self, state: &State, out: &mut [f64]) {
        let floor = (1.0 - self.alpha) / out.len() as f64;
        out.fill(floor);
        out[self.base.select(state)] += self.alpha;
    }

    fn prob(&self, state: &State, action: usize) -> f64 {
        let floor = (1.0 - self.alpha) / self.n_actions() as f64;
        if self.base.select(state) == action {
            floor + self.alpha
        } else {
            floor
        }
    }
}

/// Materialises a policy on an explicit list of states, indexed by position.
pub fn tabulate(policy: &dyn Policy, states: &[State]) -> TabularPolicy {
    TabularPolicy {
        n_actions: policy.n_actions(),
        probs: states.iter().map(|s| policy.probs(s)).collect(),
    }
}

/// Samples an action index from a probability row given `u ∈ [0, 1)`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last action with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}
