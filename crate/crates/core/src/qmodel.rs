//! Action-value models `q(x, a; τ)`.
//!
//! Every model carries an optional clip bound so that `|q| <= bound` holds
//! mechanically, whatever the fitting routine produced.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::data::State;
use crate::models::rbf::RbfFeaturizer;
use crate::optim::logistic::LogisticModel;

pub trait QModel: Send + Sync + Debug {
    fn n_actions(&self) -> usize;

    /// Writes `q(state, ·)` into `out`.
    fn values_into(&self, state: &State, out: &mut [f64]);

    fn values(&self, state: &State) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions()];
        self.values_into(state, &mut out);
        out
    }

    fn value(&self, state: &State, action: usize) -> f64 {
        self.values(state)[action]
    }
}

fn clip(v: f64, bound: Option<f64>) -> f64 {
    match bound {
        Some(b) => v.clamp(-b, b),
        None => v,
    }
}

/// State featurisation used by linear models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurizer {
    /// Indicator of `State::id` among `n_states`.
    OneHot { n_states: usize },
    /// `State::features` used verbatim.
    Identity { dim: usize },
    Rbf(RbfFeaturizer),
}

impl Featurizer {
    pub fn dim(&self) -> usize {
        match self {
            Featurizer::OneHot { n_states } => *n_states,
            Featurizer::Identity { dim } => *dim,
            Featurizer::Rbf(f) => f.dim(),
        }
    }

    /// Calls `f(index, value)` for each feature; allocation-free for one-hot
    /// and identity features.
    pub fn for_each(&self, state: &State, mut f: impl FnMut(usize, f64)) {
        match self {
            Featurizer::OneHot { .. } => f(state.id, 1.0),
            Featurizer::Identity { .. } => state.features.iter().enumerate().for_each(|(j, x)| f(j, *x)),
            Featurizer::Rbf(r) => r.featurize_clamped(&state.features).into_iter().enumerate().for_each(|(j, x)| f(j, x)),
        }
    }

    /// Sparse `(index, value)` view of the feature vector.
    pub fn sparse(&self, state: &State) -> Vec<(usize, f64)> {
        match self {
            Featurizer::OneHot { .. } => vec![(state.id, 1.0)],
            Featurizer::Identity { .. } => state.features.iter().copied().enumerate().collect(),
            Featurizer::Rbf(f) => f
                .featurize_clamped(&state.features)
                .into_iter()
                .enumerate()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularQ {
    pub n_actions: usize,
    /// Row-major `n_states × n_actions`.
    pub table: Vec<f64>,
    #[serde(default)]
    pub clip: Option<f64>,
}

impl TabularQ {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        TabularQ { n_actions, table: vec![0.0; n_states * n_actions], clip: None }
    }

    pub fn n_states(&self) -> usize {
        self.table.len() / self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Greedy action per state, ties to the lowest index.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states())
            .map(|s| {
                let row = self.row(s);
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }
}

impl QModel for TabularQ {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn values_into(&self, state: &State, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.row(state.id)) {
            *o = clip(*v, self.clip);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantQ {
    pub n_actions: usize,
    pub value: f64,
}

impl QModel for ConstantQ {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn values_into(&self, _state: &State, out: &mut [f64]) {
        out.fill(self.value);
    }
}

/// `q(x, a) = τ_a · φ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQ {
    pub featurizer: Featurizer,
    pub n_actions: usize,
    /// `n_actions` consecutive blocks of `featurizer.dim()` weights.
    pub weights: Vec<f64>,
    #[serde(default)]
    pub clip: Option<f64>,
}

impl LinearQ {
    pub fn zeros(featurizer: Featurizer, n_actions: usize) -> Self {
        let d = featurizer.dim();
        LinearQ { featurizer, n_actions, weights: vec![0.0; d * n_actions], clip: None }
    }
}

impl QModel for LinearQ {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn values_into(&self, state: &State, out: &mut [f64]) {
        let d = self.featurizer.dim();
        out.fill(0.0);
        self.featurizer.for_each(state, |j, x| {
            for (a, o) in out.iter_mut().enumerate() {
                *o += self.weights[a * d + j] * x;
            }
        });
        for o in out.iter_mut() {
            *o = clip(*o, self.clip);
        }
    }
}

/// Per-action logistic reward model: `q(x, a) = P(r = 1 | x, a)`.
///
/// Actions whose logged rewards were all identical carry a constant instead
/// of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticQ {
    pub per_action: Vec<LogisticArm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogisticArm {
    Model(LogisticModel),
    Constant { value: f64 },
}

impl QModel for LogisticQ {
    fn n_actions(&self) -> usize {
        self.per_action.len()
    }

    fn values_into(&self, state: &State, out: &mut [f64]) {
        for (o, arm) in out.iter_mut().zip(&self.per_action) {
            *o = match arm {
                LogisticArm::Model(m) => m.predict_proba(&state.features)[1],
                LogisticArm::Constant { value } => *value,
            };
        }
    }
}

/// Out-of-fold predictions: the logged sample with state id `i` is scored by
/// `models[fold_of[i]]`, a model fitted without that sample's fold. Ids that
/// were never logged get the average over all models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFitQ {
    pub fold_of: Vec<usize>,
    pub models: Vec<AnyQ>,
}

impl QModel for CrossFitQ {
    fn n_actions(&self) -> usize {
        self.models[0].n_actions()
    }

    fn values_into(&self, state: &State, out: &mut [f64]) {
        match self.fold_of.get(state.id).and_then(|f| self.models.get(*f)) {
            Some(m) => m.values_into(state, out),
            None => {
                out.fill(0.0);
                let mut buf = vec![0.0; out.len()];
                let w = 1.0 / self.models.len() as f64;
                for m in &self.models {
                    m.values_into(state, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += w * b;
                    }
                }
            }
        }
    }
}

/// Serialisable union of every model kind, plus convex blends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyQ {
    Tabular(TabularQ),
    Constant(ConstantQ),
    Linear(LinearQ),
    Logistic(LogisticQ),
    CrossFit(CrossFitQ),
    Blend { parts: Vec<(f64, AnyQ)> },
}

impl AnyQ {
    pub fn zero(n_actions: usize) -> Self {
        AnyQ::Constant(ConstantQ { n_actions, value: 0.0 })
    }
}

impl QModel for AnyQ {
    fn n_actions(&self) -> usize {
        match self {
            AnyQ::Tabular(q) => q.n_actions(),
            AnyQ::Constant(q) => q.n_actions(),
            AnyQ::Linear(q) => q.n_actions(),
            AnyQ::Logistic(q) => q.n_actions(),
            AnyQ::CrossFit(q) => q.n_actions(),
            AnyQ::Blend { parts } => parts[0].1.n_actions(),
        }
    }

    fn values_into(&self, state: &State, out: &mut [f64]) {
        match self {
            AnyQ::Tabular(q) => q.values_into(state, out),
            AnyQ::Constant(q) => q.values_into(state, out),
            AnyQ::Linear(q) => q.values_into(state, out),
            AnyQ::Logistic(q) => q.values_into(state, out),
            AnyQ::CrossFit(q) => q.values_into(state, out),
            AnyQ::Blend { parts } => {
                out.fill(0.0);
                let mut buf = vec![0.0; out.len()];
                for (w, q) in parts {
                    q.values_into(state, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += w * b;
                    }
                }
            }
        }
    }
}
