//! Finite MDPs with exact dynamic-programming and enumeration oracles.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::{State, Step, Trajectory};
use crate::envs::{Environment, Transition};
use crate::error::{OpeError, Result};
use crate::policy::{sample_index, Policy, TabularPolicy};
use crate::qmodel::TabularQ;

/// `(next_state, probability)` pairs.
pub type Distribution = Vec<(usize, f64)>;

/// A finite MDP. Reaching a terminal state ends the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Indexed by `s * n_actions + a`.
    pub transitions: Vec<Distribution>,
    /// Indexed by `s * n_actions + a`.
    pub rewards: Vec<f64>,
    pub start: Distribution,
    pub terminals: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<Distribution>,
        rewards: Vec<f64>,
        start: Distribution,
        terminals: Vec<bool>,
    ) -> Result<Self> {
        let mdp = TabularMdp { n_states, n_actions, transitions, rewards, start, terminals };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let sa = self.n_states * self.n_actions;
        if self.transitions.len() != sa || self.rewards.len() != sa || self.terminals.len() != self.n_states {
            return Err(OpeError::InvalidData("MDP tables have inconsistent sizes".into()));
        }
        let check = |d: &Distribution, what: &str| -> Result<()> {
            let mut total = 0.0;
            for &(s, p) in d {
                if s >= self.n_states || !(p >= 0.0) {
                    return Err(OpeError::InvalidData(format!("bad entry ({s}, {p}) in {what}")));
                }
                total += p;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(OpeError::InvalidData(format!("{what} sums to {total}")));
            }
            Ok(())
        };
        check(&self.start, "start distribution")?;
        for (i, d) in self.transitions.iter().enumerate() {
            check(d, &format!("transition row {i}"))?;
        }
        Ok(())
    }

    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[self.idx(s, a)]
    }

    pub fn transition(&self, s: usize, a: usize) -> &Distribution {
        &self.transitions[self.idx(s, a)]
    }

    /// Finite-horizon action values `Q_t(s, a)` for `t = 0..horizon`.
    ///
    /// Terminal states have value 0.
    pub fn q_values(&self, pi: &dyn Policy, horizon: usize, gamma: f64) -> Vec<TabularQ> {
        let mut v_next = vec![0.0; self.n_states];
        let mut out = Vec::with_capacity(horizon);
        let mut probs = vec![0.0; self.n_actions];
        for _ in 0..horizon {
            let mut q = TabularQ::zeros(self.n_states, self.n_actions);
            let mut v = vec![0.0; self.n_states];
            for s in 0..self.n_states {
                if self.terminals[s] {
                    continue;
                }
                pi.probs_into(&State::discrete(s), &mut probs);
                for a in 0..self.n_actions {
                    let cont: f64 = self.transition(s, a).iter().map(|&(s2, p)| p * v_next[s2]).sum();
                    let qa = self.reward(s, a) + gamma * cont;
                    q.table[s * self.n_actions + a] = qa;
                    v[s] += probs[a] * qa;
                }
            }
            out.push(q);
            v_next = v;
        }
        out.reverse();
        out
    }

    /// `β = E[Σ_{t<T} γ^t r_t]` under `pi` by backward induction.
    pub fn exact_policy_value(&self, pi: &dyn Policy, horizon: usize, gamma: f64) -> f64 {
        if horizon == 0 {
            return 0.0;
        }
        let q0 = &self.q_values(pi, horizon, gamma)[0];
        self.start
            .iter()
            .map(|&(s, p)| {
                if self.terminals[s] {
                    return 0.0;
                }
                let probs = pi.probs(&State::discrete(s));
                p * probs.iter().enumerate().map(|(a, pa)| pa * q0.get(s, a)).sum::<f64>()
            })
            .sum()
    }

    /// Every trajectory of length at most `horizon` with positive probability
    /// under `pi`, together with that probability.
    pub fn enumerate_trajectories(&self, pi: &dyn Policy, horizon: usize) -> Vec<(Trajectory, f64)> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        for &(s, p) in &self.start {
            if p > 0.0 && !self.terminals[s] {
                self.enumerate_from(pi, s, p, horizon, &mut prefix, &mut out);
            }
        }
        out
    }

    fn enumerate_from(
        &self,
        pi: &dyn Policy,
        s: usize,
        prob: f64,
        remaining: usize,
        prefix: &mut Vec<Step>,
        out: &mut Vec<(Trajectory, f64)>,
    ) {
        let probs = pi.probs(&State::discrete(s));
        for (a, pa) in probs.iter().enumerate() {
            if *pa <= 0.0 {
                continue;
            }
            prefix.push(Step::new(State::discrete(s), a, self.reward(s, a)));
            let pa_prob = prob * pa;
            if remaining == 1 {
                out.push((Trajectory::new(prefix.clone()), pa_prob));
            } else {
                for &(s2, p2) in self.transition(s, a) {
                    if p2 <= 0.0 {
                        continue;
                    }
                    if self.terminals[s2] {
                        out.push((Trajectory::new(prefix.clone()), pa_prob * p2));
                    } else {
                        self.enumerate_from(pi, s2, pa_prob * p2, remaining - 1, prefix, out);
                    }
                }
            }
            prefix.pop();
        }
    }

    /// The time-indexed copy of this MDP: state `t·|S| + s` is `s` at time
    /// `t`, for `t = 0..=horizon`. Stationary quantities of the unrolled MDP
    /// are the time-dependent quantities of the original.
    pub fn unrolled(&self, horizon: usize) -> TabularMdp {
        let ns = self.n_states;
        let total = ns * (horizon + 1);
        let mut transitions = Vec::with_capacity(total * self.n_actions);
        let mut rewards = Vec::with_capacity(total * self.n_actions);
        let mut terminals = Vec::with_capacity(total);
        for t in 0..=horizon {
            for s in 0..ns {
                terminals.push(self.terminals[s] || t == horizon);
                for a in 0..self.n_actions {
                    let next_t = (t + 1).min(horizon);
                    transitions.push(self.transition(s, a).iter().map(|&(s2, p)| (next_t * ns + s2, p)).collect());
                    rewards.push(self.reward(s, a));
                }
            }
        }
        TabularMdp {
            n_states: total,
            n_actions: self.n_actions,
            transitions,
            rewards,
            start: self.start.clone(),
            terminals,
        }
    }

    /// Repeats a stationary policy table over the unrolled state space.
    pub fn unroll_policy(policy: &TabularPolicy, horizon: usize) -> TabularPolicy {
        let rows = policy.rows();
        let probs = (0..=horizon).flat_map(|_| rows.iter().cloned()).collect();
        TabularPolicy::new(probs).expect("rows of a valid policy stay valid")
    }
}

impl Environment for TabularMdp {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn n_states(&self) -> usize {
        self.n_states
    }

    fn reward_bound(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    fn reset(&self, rng: &mut dyn RngCore) -> State {
        let u: f64 = rng.random();
        let probs: Vec<f64> = self.start.iter().map(|p| p.1).collect();
        State::discrete(self.start[sample_index(&probs, u)].0)
    }

    fn step(&self, state: &State, action: usize, rng: &mut dyn RngCore) -> Result<Transition> {
        if action >= self.n_actions {
            return Err(OpeError::InvalidAction { action, n_actions: self.n_actions });
        }
        if state.id >= self.n_states {
            return Err(OpeError::OutOfBounds(format!("state {} of {}", state.id, self.n_states)));
        }
        let dist = self.transition(state.id, action);
        let next = if dist.len() == 1 {
            dist[0].0
        } else {
            let u: f64 = rng.random();
            let probs: Vec<f64> = dist.iter().map(|p| p.1).collect();
            dist[sample_index(&probs, u)].0
        };
        Ok(Transition {
            next: State::discrete(next),
            reward: self.reward(state.id, action),
            done: self.terminals[next],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two states; action 1 in state 0 moves to state 1 (reward 1), which is
    /// absorbing with reward 0.
    fn chain() -> TabularMdp {
        TabularMdp::new(
            2,
            2,
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![(0, 1.0)],
            vec![false, false],
        )
        .unwrap()
    }

    #[test]
    fn rejects_unnormalised_rows() {
        let mut m = chain();
        m.transitions[0] = vec![(0, 0.5)];
        assert!(m.validate().is_err());
    }

    #[test]
    fn hand_dp_value() {
        // π(1|0) = 0.25: V_2(0) = 0.25 + 0.75·0.25 = 0.4375
        let pi = TabularPolicy::new(vec![vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
        let v = chain().exact_policy_value(&pi, 2, 1.0);
        assert!((v - 0.4375).abs() < 1e-15);
        let v0 = chain().exact_policy_value(&pi, 2, 0.0);
        assert!((v0 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn enumeration_matches_dp() {
        let pi = TabularPolicy::new(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let m = chain();
        for horizon in 1..5 {
            let paths = m.enumerate_trajectories(&pi, horizon);
            let mass: f64 = paths.iter().map(|p| p.1).sum();
            let val: f64 = paths.iter().map(|(t, p)| p * t.discounted_return(0.9)).sum();
            assert!((mass - 1.0).abs() < 1e-12);
            assert!((val - m.exact_policy_value(&pi, horizon, 0.9)).abs() < 1e-12);
        }
    }

    #[test]
    fn unrolled_value_is_unchanged() {
        let pi = TabularPolicy::new(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let m = chain();
        let u = m.unrolled(3);
        let upi = TabularMdp::unroll_policy(&pi, 3);
        assert!((u.exact_policy_value(&upi, 3, 1.0) - m.exact_policy_value(&pi, 3, 1.0)).abs() < 1e-12);
    }
}
