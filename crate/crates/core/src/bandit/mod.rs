//! Classification data turned into logged bandit feedback.
//!
//! A classifier `π_d` trained on one split defines mixture policies
//! `α π_d + (1 − α) π_u`; on the other split each row becomes a round where
//! the logged action earns reward 1 iff it equals the label.

pub mod classification;
pub mod pipeline;

pub use classification::{load_classification_csv, parse_classification_csv, split_train_eval, synthetic_clusters, ClassificationDataset};
pub use pipeline::{
    fit_reward_models, fit_reward_models_cross, log_bandit_data, mixture_policy, true_bandit_value, BanditProblem, BanditSetup,
};
