//! Policies, logging and ground truth for classification-derived bandits.
//!
//! Rows of the evaluation split are identified by their index: round `i`
//! has state `State::with_features(i, x_i)`, so classifier decisions can be
//! tabulated once per split.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::classification::{split_train_eval, ClassificationDataset};
use crate::data::{LoggedDataset, State, Step, Trajectory};
use crate::envs::derive_seed;
use crate::error::{OpeError, Result};
use crate::optim::logistic::{logistic_fit, LogisticConfig, LogisticModel, Penalty};
use crate::policy::{sample_index, ActionSelector, MixturePolicy, Policy, TableSelector};
use crate::qmodel::{AnyQ, CrossFitQ, LogisticArm, LogisticQ};

/// `α π_d + (1 − α) π_u`.
pub fn mixture_policy(pi_d: Arc<dyn ActionSelector>, alpha: f64) -> Result<MixturePolicy> {
    MixturePolicy::new(pi_d, alpha)
}

fn row_state(i: usize, x: &[f64]) -> State {
    State::with_features(i, x.to_vec())
}

/// One logged round per row: `a ~ π_b(·|x_i)`, reward `1{a = y_i}`.
pub fn log_bandit_data(eval: &ClassificationDataset, pi_b: Arc<dyn Policy>, seed: u64) -> Result<LoggedDataset> {
    let mut probs = vec![0.0; pi_b.n_actions()];
    let samples = eval
        .features
        .iter()
        .zip(&eval.labels)
        .enumerate()
        .map(|(i, (x, y))| {
            let state = row_state(i, x);
            pi_b.probs_into(&state, &mut probs);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let a = sample_index(&probs, rng.random());
            Step::new(state, a, if a == *y { 1.0 } else { 0.0 })
        })
        .collect();
    LoggedDataset::from_bandit(samples, pi_b, 1.0)
}

/// `(1/n) Σ_i π_e(y_i | x_i)`, the exact value of `π_e` on the split.
pub fn true_bandit_value(eval: &ClassificationDataset, pi_e: &dyn Policy) -> f64 {
    let total: f64 = eval
        .features
        .iter()
        .zip(&eval.labels)
        .enumerate()
        .map(|(i, (x, y))| pi_e.prob(&row_state(i, x), *y))
        .sum();
    total / eval.len() as f64
}

/// Per-action binary logistic models of `P(r = 1 | x, a)` fitted on the
/// logged rounds with that action. Actions whose rounds all share one reward
/// (or that were never taken) get a constant.
pub fn fit_reward_models(data: &LoggedDataset, cfg: &LogisticConfig) -> Result<LogisticQ> {
    let n_actions = data.n_actions();
    let mut per_action = Vec::with_capacity(n_actions);
    for a in 0..n_actions {
        let rows: Vec<&Step> = data.trajectories().iter().map(|t| &t.steps[0]).filter(|s| s.action == a).collect();
        let labels: Vec<usize> = rows.iter().map(|s| usize::from(s.reward > 0.5)).collect();
        let positives = labels.iter().sum::<usize>();
        if rows.is_empty() || positives == 0 || positives == rows.len() {
            let value = if rows.is_empty() { 0.0 } else { positives as f64 / rows.len() as f64 };
            per_action.push(LogisticArm::Constant { value });
            continue;
        }
        let features: Vec<Vec<f64>> = rows.iter().map(|s| s.state.features.clone()).collect();
        per_action.push(LogisticArm::Model(logistic_fit(&features, &labels, 2, cfg)?));
    }
    Ok(LogisticQ { per_action })
}

/// [`fit_reward_models`] with `folds`-fold cross-fitting.
///
/// Logged rounds are shuffled into `folds` groups by `seed`; each round is
/// scored by the models fitted on the other groups, so a round's own reward
/// never enters its prediction. `folds == 1` fits once on all rounds.
pub fn fit_reward_models_cross(data: &LoggedDataset, cfg: &LogisticConfig, folds: usize, seed: u64) -> Result<AnyQ> {
    if folds == 0 || folds > data.n() {
        return Err(OpeError::InvalidConfig(format!("cannot split {} rounds into {folds} folds", data.n())));
    }
    if folds == 1 {
        return Ok(AnyQ::Logistic(fit_reward_models(data, cfg)?));
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of_row = vec![0; data.n()];
    for (pos, row) in order.into_iter().enumerate() {
        fold_of_row[row] = pos % folds;
    }
    let trajs = data.trajectories();
    let max_id = trajs.iter().map(|t| t.steps[0].state.id).max().unwrap_or(0);
    let mut fold_of = vec![usize::MAX; max_id + 1];
    for (row, t) in trajs.iter().enumerate() {
        fold_of[t.steps[0].state.id] = fold_of_row[row];
    }
    let mut models = Vec::with_capacity(folds);
    for f in 0..folds {
        let rest: Vec<Trajectory> =
            trajs.iter().zip(&fold_of_row).filter(|(_, g)| **g != f).map(|(t, _)| t.clone()).collect();
        let part = LoggedDataset::new(rest, data.behavior_arc(), 1, data.gamma(), data.r_max())?;
        models.push(AnyQ::Logistic(fit_reward_models(&part, cfg)?));
    }
    Ok(AnyQ::CrossFit(CrossFitQ { fold_of, models }))
}

/// How a classification dataset becomes a family of bandit problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSetup {
    pub train_frac: f64,
    pub split_seed: u64,
    /// `π_d` weight in the evaluation policy.
    pub eval_alpha: f64,
    pub classifier: LogisticConfig,
}

impl Default for BanditSetup {
    fn default() -> Self {
        BanditSetup { train_frac: 0.3, split_seed: 0, eval_alpha: 0.9, classifier: LogisticConfig::new(Penalty::L2, 1.0) }
    }
}

/// The evaluation split with its classifier policy and ground truth.
#[derive(Debug, Clone)]
pub struct BanditProblem {
    pub eval: ClassificationDataset,
    pub classifier: LogisticModel,
    /// `π_d` tabulated over evaluation rows.
    pub pi_d: Arc<TableSelector>,
    pub pi_e: Arc<MixturePolicy>,
    pub truth: f64,
}

impl BanditProblem {
    /// Splits, trains `π_d` on the training part and tabulates it on the
    /// evaluation part.
    pub fn prepare(data: &ClassificationDataset, setup: &BanditSetup) -> Result<Self> {
        let (train, eval) = split_train_eval(data, setup.train_frac, setup.split_seed)?;
        let classifier = logistic_fit(&train.features, &train.labels, data.n_classes, &setup.classifier)?;
        let pi_d = Arc::new(TableSelector {
            n_actions: data.n_classes,
            actions: eval.features.iter().map(|x| classifier.predict(x)).collect(),
        });
        let pi_e = Arc::new(mixture_policy(pi_d.clone(), setup.eval_alpha)?);
        let truth = true_bandit_value(&eval, pi_e.as_ref());
        Ok(BanditProblem { eval, classifier, pi_d, pi_e, truth })
    }

    pub fn behavior(&self, alpha: f64) -> Result<Arc<MixturePolicy>> {
        Ok(Arc::new(mixture_policy(self.pi_d.clone(), alpha)?))
    }

    /// Accuracy of `π_d` on the evaluation split.
    pub fn classifier_accuracy(&self) -> f64 {
        let hits = self.pi_d.actions.iter().zip(&self.eval.labels).filter(|(a, y)| a == y).count();
        hits as f64 / self.eval.len() as f64
    }

    pub fn log(&self, pi_b: Arc<dyn Policy>, seed: u64) -> Result<LoggedDataset> {
        log_bandit_data(&self.eval, pi_b, seed)
    }
}
