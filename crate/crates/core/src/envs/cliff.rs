//! 4×12 cliff-walking gridworld.
//!
//! State ids are `row * 12 + col`; the start is the bottom-left corner, the
//! goal the bottom-right, and the cells between them form the cliff. Steps
//! cost −1; stepping into the cliff yields `cliff_reward` and returns the
//! agent to the start without ending the episode.

use rand::RngCore;

use crate::data::State;
use crate::envs::{grid_move, Environment, TabularMdp, Transition};
use crate::error::{OpeError, Result};

pub const ROWS: usize = 4;
pub const COLS: usize = 12;
pub const START: usize = 3 * COLS;
pub const GOAL: usize = 3 * COLS + 11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliffWalking {
    /// Reward of a transition into the cliff: −100 by default, −101 when the
    /// regular step cost is added on top.
    pub cliff_reward: f64,
}

impl Default for CliffWalking {
    fn default() -> Self {
        CliffWalking { cliff_reward: -100.0 }
    }
}

pub fn is_cliff(state: usize) -> bool {
    state / COLS == ROWS - 1 && (1..COLS - 1).contains(&(state % COLS))
}

impl CliffWalking {
    pub fn with_step_cost_on_cliff() -> Self {
        CliffWalking { cliff_reward: -101.0 }
    }

    pub fn next(&self, state: usize, action: usize) -> (usize, f64) {
        let (r, c) = grid_move(state / COLS, state % COLS, action, ROWS, COLS);
        let next = r * COLS + c;
        if is_cliff(next) {
            (START, self.cliff_reward)
        } else {
            (next, -1.0)
        }
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
        TabularMdp::new(n, 4, transitions, rewards, vec![(START, 1.0)], terminals).expect("cliff tables are valid")
    }
}

impl Environment for CliffWalking {
    fn n_actions(&self) -> usize {
        4
    }

    fn n_states(&self) -> usize {
        ROWS * COLS
    }

    fn reward_bound(&self) -> f64 {
        self.cliff_reward.abs().max(1.0)
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> State {
        State::discrete(START)
    }

    fn step(&self, state: &State, action: usize, _rng: &mut dyn RngCore) -> Result<Transition> {
        if action >= 4 {
            return Err(OpeError::InvalidAction { action, n_actions: 4 });
        }
        if state.id >= ROWS * COLS {
            return Err(OpeError::OutOfBounds(format!("cliff state {}", state.id)));
        }
        let (next, reward) = self.next(state.id, action);
        Ok(Transition { next: State::discrete(next), reward, done: next == GOAL })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cliff_resets_with_penalty() {
        let env = CliffWalking::default();
        assert_eq!(env.next(START, 2), (START, -100.0));
        assert_eq!(CliffWalking::with_step_cost_on_cliff().next(START, 2), (START, -101.0));
    }

    #[test]
    fn ordinary_step_and_goal() {
        let env = CliffWalking::default();
        assert_eq!(env.next(START, 0), (START - COLS, -1.0));
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let t = env.step(&State::discrete(GOAL - COLS), 1, &mut rng).unwrap();
        assert!(t.done);
        assert_eq!(t.next.id, GOAL);
    }
}
