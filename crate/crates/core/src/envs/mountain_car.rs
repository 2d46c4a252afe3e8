//! Mountain Car with the classic deterministic dynamics.
//!
//! `v ← clip(v + 0.001·(a − 1) − 0.0025·cos(3p), ±0.07)`,
//! `p ← clip(p + v, [−1.2, 0.6])`, with the velocity zeroed at the left
//! wall. Actions are 0 push left, 1 no push, 2 push right. Every step costs
//! −1 and the episode ends once `p ≥ 0.5`. States carry `[p, v]` as features
//! and a grid-cell tag as id.

use rand::{Rng, RngCore};

use crate::data::State;
use crate::envs::{Environment, Transition};
use crate::error::{OpeError, Result};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCar {
    /// Cells per axis of the discretisation used for state ids.
    pub grid: usize,
}

impl Default for MountainCar {
    fn default() -> Self {
        MountainCar { grid: 20 }
    }
}

impl MountainCar {
    pub fn physics(position: f64, velocity: f64, action: usize) -> (f64, f64) {
        let mut v = velocity + (action as f64 - 1.0) * 0.001 - 0.0025 * (3.0 * position).cos();
        v = v.clamp(-MAX_SPEED, MAX_SPEED);
        let mut p = (position + v).clamp(MIN_POSITION, MAX_POSITION);
        if p <= MIN_POSITION && v < 0.0 {
            p = MIN_POSITION;
            v = 0.0;
        }
        (p, v)
    }

    fn cell(&self, x: f64, lo: f64, hi: f64) -> usize {
        let u = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        ((u * self.grid as f64) as usize).min(self.grid - 1)
    }

    pub fn state(&self, position: f64, velocity: f64) -> State {
        let id = self.cell(position, MIN_POSITION, MAX_POSITION) * self.grid
            + self.cell(velocity, -MAX_SPEED, MAX_SPEED);
        State::with_features(id, vec![position, velocity])
    }
}

impl Environment for MountainCar {
    fn n_actions(&self) -> usize {
        3
    }

    fn n_states(&self) -> usize {
        self.grid * self.grid
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn reset(&self, rng: &mut dyn RngCore) -> State {
        let p = rng.random_range(-0.6..-0.4);
        self.state(p, 0.0)
    }

    fn step(&self, state: &State, action: usize, _rng: &mut dyn RngCore) -> Result<Transition> {
        if action >= 3 {
            return Err(OpeError::InvalidAction { action, n_actions: 3 });
        }
        let (p, v) = match state.features.as_slice() {
            [p, v] => (*p, *v),
            _ => return Err(OpeError::InvalidData("mountain car states need [position, velocity]".into())),
        };
        if !(MIN_POSITION..=MAX_POSITION).contains(&p) || v.abs() > MAX_SPEED {
            return Err(OpeError::OutOfBounds(format!("mountain car state ({p}, {v})")));
        }
        let (p2, v2) = Self::physics(p, v, action);
        Ok(Transition { next: self.state(p2, v2), reward: -1.0, done: p2 >= GOAL_POSITION })
    }
}
