//! 7×10 gridworld with an upward crosswind through the middle columns.
//!
//! State ids are `row * 10 + col` with row 0 at the top. Actions are
//! 0 up, 1 down, 2 right, 3 left. The wind of the column the agent leaves
//! pushes it upward by that many cells. Every step costs −1 and the episode
//! ends on reaching the goal.

use rand::RngCore;

use crate::data::State;
use crate::envs::{grid_move, Environment, TabularMdp, Transition};
use crate::error::{OpeError, Result};

pub const ROWS: usize = 7;
pub const COLS: usize = 10;
pub const WIND: [usize; COLS] = [0, 0, 0, 1, 1, 1, 2, 2, 1, 0];
pub const START: usize = 3 * COLS;
pub const GOAL: usize = 3 * COLS + 7;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WindyGridworld;

impl WindyGridworld {
    /// Deterministic successor and reward of `(state, action)`.
    pub fn next(&self, state: usize, action: usize) -> (usize, f64) {
        let (row, col) = (state / COLS, state % COLS);
        let (r, c) = grid_move(row, col, action, ROWS, COLS);
        let r = r.saturating_sub(WIND[col]);
        (r * COLS + c, -1.0)
    }

    pub fn to_tabular(&self) -> TabularMdp {
        let n = ROWS * COLS;
        let mut transitions = Vec::with_capacity(n * 4);
        let mut rewards = Vec::with_capacity(n * 4);
        for s in 0..n {
            for a in 0..4 {
                let (next, r) = if s == GOAL { (s, 0.0) } else { self.next(s, a) };
                transitions.push(vec![(next, 1.0)]);
                rewards.push(r);
            }
        }
        let terminals = (0..n).map(|s| s == GOAL).collect();
        TabularMdp::new(n, 4, transitions, rewards, vec![(START, 1.0)], terminals).expect("windy tables are valid")
    }
}

impl Environment for WindyGridworld {
    fn n_actions(&self) -> usize {
        4
    }

    fn n_states(&self) -> usize {
        ROWS * COLS
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> State {
        State::discrete(START)
    }

    fn step(&self, state: &State, action: usize, _rng: &mut dyn RngCore) -> Result<Transition> {
        if action >= 4 {
            return Err(OpeError::InvalidAction { action, n_actions: 4 });
        }
        if state.id >= ROWS * COLS {
            return Err(OpeError::OutOfBounds(format!("windy state {}", state.id)));
        }
        let (next, reward) = self.next(state.id, action);
        Ok(Transition { next: State::discrete(next), reward, done: next == GOAL })
    }
}
