//! Environments, trajectory generation and exact value oracles.

pub mod cliff;
pub mod mountain_car;
pub mod sampling;
pub mod tabular;
pub mod windy;

use rand::RngCore;

use crate::data::State;
use crate::error::Result;

pub use cliff::CliffWalking;
pub use mountain_car::MountainCar;
pub use sampling::{derive_seed, generate_trajectories, rollout_value, RolloutValue};
pub use tabular::TabularMdp;
pub use windy::WindyGridworld;

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: State,
    pub reward: f64,
    pub done: bool,
}

/// An episodic environment with a finite action set.
///
/// Environments are immutable; all randomness comes from the caller's RNG.
pub trait Environment: Send + Sync {
    fn n_actions(&self) -> usize;

    /// Number of discrete state ids, when states are discrete.
    fn n_states(&self) -> usize;

    /// Largest absolute one-step reward.
    fn reward_bound(&self) -> f64;

    fn reset(&self, rng: &mut dyn RngCore) -> State;

    fn step(&self, state: &State, action: usize, rng: &mut dyn RngCore) -> Result<Transition>;
}

/// Grid coordinates for the gridworld environments.
pub(crate) fn grid_move(row: usize, col: usize, action: usize, rows: usize, cols: usize) -> (usize, usize) {
    match action {
        0 => (row.saturating_sub(1), col),
        1 => ((row + 1).min(rows - 1), col),
        2 => (row, (col + 1).min(cols - 1)),
        _ => (row, col.saturating_sub(1)),
    }
}
