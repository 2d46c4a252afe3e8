//! Importance ratios and control variates.
//!
//! Notation follows the estimator definitions: `ω_{t1:t2}` is the product of
//! per-step ratios `π_e(a_t|x_t) / π_b(a_t|x_t)` over `t1..=t2` (1 when the
//! range is empty), `F(m)` is the bandit control variate
//! `w·m(x,a) − Σ_a' m(x,a')π_e(a'|x)` and `g` its multi-step analogue
//! `Σ_t γ^t (ω_{0:t} m_t(x_t,a_t) − ω_{0:t−1} Σ_a m_t(x_t,a)π_e(a|x_t))`.
//!
//! Control-variate functions are linear in a small basis: the constant 1
//! followed by one or more fitted Q-models. [`PreparedData`] caches every
//! per-step quantity an estimator needs so the design matrix of the basis
//! can be built once.

use nalgebra::{DMatrix, DVector};

use crate::data::{LoggedDataset, State, Trajectory};
use crate::error::{OpeError, Result};
use crate::policy::Policy;
use crate::qmodel::QModel;
use crate::report::ControlVariateParams;

fn step_ratio(state: &State, action: usize, pi_e: &dyn Policy, pi_b: &dyn Policy) -> Result<f64> {
    let pb = pi_b.prob(state, action);
    if pb <= 0.0 {
        return Err(OpeError::ZeroPropensity { state: state.id, action });
    }
    Ok(pi_e.prob(state, action) / pb)
}

/// `ω_{t1:t2}`; steps beyond the trajectory's end contribute a ratio of 1.
pub fn cumulative_ratio(
    traj: &Trajectory,
    pi_e: &dyn Policy,
    pi_b: &dyn Policy,
    t1: usize,
    t2: usize,
) -> Result<f64> {
    let mut w = 1.0;
    if t1 > t2 {
        return Ok(w);
    }
    for (t, step) in traj.steps.iter().enumerate().take(t2 + 1).skip(t1) {
        w *= step_ratio(&step.state, step.action, pi_e, pi_b)?;
        if !w.is_finite() {
            return Err(OpeError::RatioOverflow { step: t });
        }
    }
    Ok(w)
}

/// `F(m) = w·m(x,a) − Σ_a' m(x,a')π_e(a'|x)` at a single logged pair.
pub fn control_variate_f<M>(
    state: &State,
    action: usize,
    m: M,
    pi_e: &dyn Policy,
    pi_b: &dyn Policy,
) -> Result<f64>
where
    M: Fn(&State, usize) -> f64,
{
    let w = step_ratio(state, action, pi_e, pi_b)?;
    let probs = pi_e.probs(state);
    let expected: f64 = probs.iter().enumerate().map(|(a, p)| p * m(state, a)).sum();
    Ok(w * m(state, action) - expected)
}

/// `g` for one trajectory with `m_t = ζ_{b(t),0} + Σ_j ζ_{b(t),j} q_j`.
pub fn control_variate_g(
    traj: &Trajectory,
    params: &ControlVariateParams,
    qs: &[&dyn QModel],
    pi_e: &dyn Policy,
    pi_b: &dyn Policy,
    gamma: f64,
) -> Result<f64> {
    check_basis(params, qs)?;
    Ok(TrajectoryTerms::new(traj, pi_e, pi_b, gamma, qs)?.control_variate(params))
}

/// The summand of `β̂_d`: step-wise IS return minus `g`.
pub fn per_trajectory_dr_value(
    traj: &Trajectory,
    params: &ControlVariateParams,
    qs: &[&dyn QModel],
    pi_e: &dyn Policy,
    pi_b: &dyn Policy,
    gamma: f64,
) -> Result<f64> {
    check_basis(params, qs)?;
    let terms = TrajectoryTerms::new(traj, pi_e, pi_b, gamma, qs)?;
    Ok(terms.sis_value() - terms.control_variate(params))
}

fn check_basis(params: &ControlVariateParams, qs: &[&dyn QModel]) -> Result<()> {
    if params.basis_len() != qs.len() + 1 {
        return Err(OpeError::InvalidConfig(format!(
            "control variate has {} coefficients per block but the basis has {}",
            params.basis_len(),
            qs.len() + 1
        )));
    }
    Ok(())
}

/// Per-step cached quantities for one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryTerms {
    discount: Vec<f64>,
    /// `ω_{0:t}`
    cum: Vec<f64>,
    /// `ω_{0:t−1}`
    prev: Vec<f64>,
    reward: Vec<f64>,
    n_q: usize,
    /// `q_j(x_t, a_t)`, row-major `len × n_q`.
    q_logged: Vec<f64>,
    /// `Σ_a π_e(a|x_t) q_j(x_t, a)`, row-major `len × n_q`.
    q_expected: Vec<f64>,
}

impl TrajectoryTerms {
    pub fn new(
        traj: &Trajectory,
        pi_e: &dyn Policy,
        pi_b: &dyn Policy,
        gamma: f64,
        qs: &[&dyn QModel],
    ) -> Result<Self> {
        let len = traj.len();
        let n_q = qs.len();
        let n_actions = pi_e.n_actions();
        let mut out = TrajectoryTerms {
            discount: Vec::with_capacity(len),
            cum: Vec::with_capacity(len),
            prev: Vec::with_capacity(len),
            reward: Vec::with_capacity(len),
            n_q,
            q_logged: Vec::with_capacity(len * n_q),
            q_expected: Vec::with_capacity(len * n_q),
        };
        let mut pe = vec![0.0; n_actions];
        let mut pb = vec![0.0; n_actions];
        let mut qv = vec![0.0; n_actions];
        let mut w = 1.0;
        let mut disc = 1.0;
        for (t, step) in traj.steps.iter().enumerate() {
            let a = step.action;
            if a >= n_actions {
                return Err(OpeError::InvalidAction { action: a, n_actions });
            }
            pi_e.probs_into(&step.state, &mut pe);
            pi_b.probs_into(&step.state, &mut pb);
            if pb[a] <= 0.0 {
                return Err(OpeError::ZeroPropensity { state: step.state.id, action: a });
            }
            out.prev.push(w);
            w *= pe[a] / pb[a];
            if !w.is_finite() {
                return Err(OpeError::RatioOverflow { step: t });
            }
            out.cum.push(w);
            out.discount.push(disc);
            out.reward.push(step.reward);
            for q in qs {
                q.values_into(&step.state, &mut qv);
                out.q_logged.push(qv[a]);
                out.q_expected.push(pe.iter().zip(&qv).map(|(p, v)| p * v).sum());
            }
            disc *= gamma;
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.cum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cum.is_empty()
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    /// `ω_{0:t}`, extended past the end by the absorbing padding.
    pub fn cum_ratio(&self, t: usize) -> f64 {
        self.cum[t.min(self.len() - 1)]
    }

    /// `ω_{0:T−1}`.
    pub fn final_ratio(&self) -> f64 {
        self.cum[self.len() - 1]
    }

    pub fn cum_ratios(&self) -> &[f64] {
        &self.cum
    }

    pub fn prev_ratios(&self) -> &[f64] {
        &self.prev
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discount
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn discounted_return(&self) -> f64 {
        self.discount.iter().zip(&self.reward).map(|(d, r)| d * r).sum()
    }

    /// `Σ_t γ^t ω_{0:t} r_t`.
    pub fn sis_value(&self) -> f64 {
        (0..self.len()).map(|t| self.discount[t] * self.cum[t] * self.reward[t]).sum()
    }

    /// `ω_{0:T−1} Σ_t γ^t r_t`.
    pub fn is_value(&self) -> f64 {
        self.final_ratio() * self.discounted_return()
    }

    /// Basis function `j` at the logged action (`j = 0` is the constant).
    pub fn basis_logged(&self, t: usize, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.q_logged[t * self.n_q + j - 1]
        }
    }

    /// `Σ_a π_e(a|x_t) φ_j(x_t, a)`.
    pub fn basis_expected(&self, t: usize, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.q_expected[t * self.n_q + j - 1]
        }
    }

    /// Contribution of basis `j` at step `t` to `g`.
    pub fn step_regressor(&self, t: usize, j: usize) -> f64 {
        self.discount[t] * (self.cum[t] * self.basis_logged(t, j) - self.prev[t] * self.basis_expected(t, j))
    }

    /// Writes the `(k+1)·(1+n_q)` regressors of `g` (block-major).
    pub fn design_row(&self, k: usize, out: &mut [f64]) {
        let basis = self.n_q + 1;
        debug_assert_eq!(out.len(), (k + 1) * basis);
        out.fill(0.0);
        for t in 0..self.len() {
            let b = t.min(k);
            for j in 0..basis {
                out[b * basis + j] += self.step_regressor(t, j);
            }
        }
    }

    pub fn control_variate(&self, params: &ControlVariateParams) -> f64 {
        let basis = self.n_q + 1;
        let mut g = 0.0;
        for t in 0..self.len() {
            let coefs = &params.blocks[params.block_of(t)];
            for (j, c) in coefs.iter().enumerate().take(basis) {
                if *c != 0.0 {
                    g += c * self.step_regressor(t, j);
                }
            }
        }
        g
    }
}

/// A dataset with every estimator-relevant per-step quantity precomputed.
#[derive(Debug, Clone)]
pub struct PreparedData {
    trajs: Vec<TrajectoryTerms>,
    horizon: usize,
    gamma: f64,
    r_max: f64,
    n_q: usize,
}

impl PreparedData {
    pub fn new(data: &LoggedDataset, pi_e: &dyn Policy, qs: &[&dyn QModel]) -> Result<Self> {
        if pi_e.n_actions() != data.n_actions() {
            return Err(OpeError::InvalidData(format!(
                "evaluation policy has {} actions, data has {}",
                pi_e.n_actions(),
                data.n_actions()
            )));
        }
        for q in qs {
            if q.n_actions() != data.n_actions() {
                return Err(OpeError::InvalidData("Q-model action count mismatch".into()));
            }
        }
        let trajs = data
            .trajectories()
            .iter()
            .map(|t| TrajectoryTerms::new(t, pi_e, data.behavior(), data.gamma(), qs))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedData {
            trajs,
            horizon: data.horizon(),
            gamma: data.gamma(),
            r_max: data.r_max(),
            n_q: qs.len(),
        })
    }

    pub fn trajectories(&self) -> &[TrajectoryTerms] {
        &self.trajs
    }

    pub fn n(&self) -> usize {
        self.trajs.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn basis_len(&self) -> usize {
        self.n_q + 1
    }

    pub fn return_bound(&self) -> f64 {
        crate::discount_mass(self.horizon, self.gamma) * self.r_max
    }

    pub fn max_weight(&self) -> f64 {
        self.trajs
            .iter()
            .flat_map(|t| t.cum_ratios().iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn sis_values(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.trajs.iter().map(TrajectoryTerms::sis_value))
    }

    pub fn is_values(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.trajs.iter().map(TrajectoryTerms::is_value))
    }

    /// `E_n[ω_{0:t}]` for `t = 0..T`.
    pub fn mean_cum_ratios(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.horizon)
            .map(|t| self.trajs.iter().map(|tr| tr.cum_ratio(t)).sum::<f64>() / n)
            .collect()
    }

    /// `n × (k+1)(1+n_q)` matrix whose rows are the regressors of `g`.
    pub fn design(&self, k: usize) -> DMatrix<f64> {
        let p = (k + 1) * self.basis_len();
        let mut m = DMatrix::zeros(self.n(), p);
        let mut row = vec![0.0; p];
        for (i, tr) in self.trajs.iter().enumerate() {
            tr.design_row(k, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Step;
    use crate::policy::TabularPolicy;
    use crate::qmodel::{ConstantQ, TabularQ};

    fn pol(rows: Vec<Vec<f64>>) -> TabularPolicy {
        TabularPolicy::new(rows).unwrap()
    }

    #[test]
    fn empty_product_is_one() {
        let pe = pol(vec![vec![0.9, 0.1]]);
        let pb = pol(vec![vec![0.5, 0.5]]);
        let t = Trajectory::new(vec![Step::new(State::discrete(0), 0, 1.0)]);
        assert_eq!(cumulative_ratio(&t, &pe, &pb, 1, 0).unwrap(), 1.0);
        assert_eq!(cumulative_ratio(&t, &pe, &pb, 3, 2).unwrap(), 1.0);
    }

    #[test]
    fn identical_policies_give_unit_ratio() {
        let p = pol(vec![vec![0.3, 0.7], vec![0.6, 0.4]]);
        let t = Trajectory::new(vec![
            Step::new(State::discrete(0), 1, 0.0),
            Step::new(State::discrete(1), 0, 0.0),
        ]);
        assert_eq!(cumulative_ratio(&t, &p, &p, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn two_step_hand_product() {
        // ratios 0.8/0.4 = 2 and 0.25/0.5 = 0.5
        let pe = pol(vec![vec![0.8, 0.2], vec![0.25, 0.75]]);
        let pb = pol(vec![vec![0.4, 0.6], vec![0.5, 0.5]]);
        let t = Trajectory::new(vec![
            Step::new(State::discrete(0), 0, 0.0),
            Step::new(State::discrete(1), 0, 0.0),
        ]);
        assert_eq!(cumulative_ratio(&t, &pe, &pb, 0, 0).unwrap(), 2.0);
        assert_eq!(cumulative_ratio(&t, &pe, &pb, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn zero_propensity_is_an_error() {
        let pe = pol(vec![vec![0.0, 1.0]]);
        let pb = pol(vec![vec![1.0, 0.0]]);
        let t = Trajectory::new(vec![Step::new(State::discrete(0), 1, 0.0)]);
        assert_eq!(
            cumulative_ratio(&t, &pe, &pb, 0, 0).unwrap_err(),
            OpeError::ZeroPropensity { state: 0, action: 1 }
        );
    }

    #[test]
    fn f_hand_values() {
        let pe = pol(vec![vec![0.9, 0.1]]);
        let pb = pol(vec![vec![0.5, 0.5]]);
        let s = State::discrete(0);
        let m = |_: &State, a: usize| if a == 0 { 1.0 } else { 0.0 };
        let f = control_variate_f(&s, 0, m, &pe, &pb).unwrap();
        assert!((f - 0.9).abs() < 1e-15);
        assert_eq!(control_variate_f(&s, 1, |_: &State, _| 0.0, &pe, &pb).unwrap(), 0.0);
        // constants cancel when w = 1
        assert_eq!(control_variate_f(&s, 1, |_: &State, _| 3.5, &pb, &pb).unwrap(), 0.0);
    }

    #[test]
    fn g_single_step_matches_f() {
        let pe = pol(vec![vec![0.9, 0.1]]);
        let pb = pol(vec![vec![0.5, 0.5]]);
        let q = TabularQ { n_actions: 2, table: vec![0.3, 0.8], clip: None };
        let s = State::discrete(0);
        let t = Trajectory::new(vec![Step::new(s.clone(), 1, 1.0)]);
        let params = ControlVariateParams::shared(vec![0.4, 1.7]);
        let g = control_variate_g(&t, &params, &[&q], &pe, &pb, 1.0).unwrap();
        let m = |st: &State, a: usize| 0.4 + 1.7 * q.value(st, a);
        let f = control_variate_f(&s, 1, m, &pe, &pb).unwrap();
        assert!((g - f).abs() < 1e-14);
    }

    #[test]
    fn zero_coefficients_give_sis() {
        let pe = pol(vec![vec![0.9, 0.1]]);
        let pb = pol(vec![vec![0.5, 0.5]]);
        let q = ConstantQ { n_actions: 2, value: 0.7 };
        let t = Trajectory::new(vec![Step::new(State::discrete(0), 0, 0.5)]);
        let params = ControlVariateParams::zeros(0, 2);
        assert_eq!(control_variate_g(&t, &params, &[&q], &pe, &pb, 1.0).unwrap(), 0.0);
        let v = per_trajectory_dr_value(&t, &params, &[&q], &pe, &pb, 1.0).unwrap();
        assert!((v - 1.8 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn w2_r_half_gives_one() {
        let pe = pol(vec![vec![1.0, 0.0]]);
        let pb = pol(vec![vec![0.5, 0.5]]);
        let t = Trajectory::new(vec![Step::new(State::discrete(0), 0, 0.5)]);
        let q = ConstantQ { n_actions: 2, value: 0.0 };
        let params = ControlVariateParams::shared(vec![0.0, 1.0]);
        assert_eq!(per_trajectory_dr_value(&t, &params, &[&q], &pe, &pb, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn basis_mismatch_is_rejected() {
        let p = pol(vec![vec![0.5, 0.5]]);
        let t = Trajectory::new(vec![Step::new(State::discrete(0), 0, 0.5)]);
        let params = ControlVariateParams::shared(vec![0.0, 1.0, 2.0]);
        assert!(control_variate_g(&t, &params, &[], &p, &p, 1.0).is_err());
    }
}
