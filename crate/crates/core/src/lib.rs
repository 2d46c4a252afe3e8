//! Off-policy evaluation for contextual bandits and finite-horizon MDPs.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`], [`policy`], [`qmodel`]: logged trajectories, stochastic
//!   policies and action-value models.
//! - [`terms`]: importance ratios and the control-variate primitives every
//!   estimator is assembled from.
//! - [`cb`] and [`rl`]: the estimators themselves (DM, IS, SNIS, DR, SNDR,
//!   MDR, REG, SNREG, EMP and their step-wise variants).
//! - [`optim`]: least squares, damped Newton, SGD and penalised logistic
//!   regression.
//! - [`models`], [`envs`], [`bandit`]: the experimental substrate (Q-learning,
//!   TD evaluation, gridworlds, Mountain Car, classification-to-bandit logs)
//!   and the exact value oracles.
//! - [`harness`]: seeded replication runs and RMSE tables.

pub mod bandit;
pub mod cb;
pub mod control;
pub mod data;
pub mod envs;
pub mod error;
pub mod harness;
pub mod io;
pub mod models;
pub mod optim;
pub mod policy;
pub mod qmodel;
pub mod report;
pub mod rl;
pub mod terms;

pub use data::{BanditSample, LoggedDataset, State, Step, Trajectory};
pub use error::{OpeError, Result};
pub use policy::{ActionSelector, MixturePolicy, Policy, TabularPolicy, UniformPolicy};
pub use qmodel::{AnyQ, QModel};
pub use report::{ControlVariateParams, CvRole, EstimatorReport};

/// `Σ_{t<T} γ^t`, the number of reward units a return can accumulate.
pub fn discount_mass(horizon: usize, gamma: f64) -> f64 {
    if gamma == 1.0 {
        return horizon as f64;
    }
    (0..horizon).map(|t| gamma.powi(t as i32)).sum()
}
