//! Policy and action-value construction: Q-learning, off-policy TD
//! evaluation and radial-basis featurisation.

pub mod q_learning;
pub mod rbf;
pub mod td;

pub use q_learning::{q_learning, QLearningConfig};
pub use rbf::RbfFeaturizer;
pub use td::{td_off_policy_evaluate, TdConfig, TdInit};
