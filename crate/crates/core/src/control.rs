//! Parametric control-variate functions `m(x, a; θ)` fitted by SGD.
//!
//! MDR picks `θ` by minimising the empirical variance of the per-trajectory
//! doubly robust value `v_i(θ) = Σ_t γ^t ω_{0:t} r_t − g_i(θ)`. SGD works on
//! the equivalent `min_{θ,c} E_n[(v_i(θ) − c)²]`, whose inner minimiser is
//! `c = E_n[v(θ)]`. With `m` nonlinear in `θ` this is non-convex and SGD
//! gives a best-effort fit.

use std::fmt::Debug;

use crate::data::{LoggedDataset, State};
use crate::error::{OpeError, Result};
use crate::optim::sgd::{sgd_minimize, SgdConfig, SgdObjective};
use crate::policy::Policy;
use crate::qmodel::Featurizer;

pub trait ControlFunction: Send + Sync + Debug {
    fn n_actions(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Writes `m(state, ·; params)` into `out`.
    fn eval(&self, params: &[f64], state: &State, out: &mut [f64]);
    /// Adds `coef · ∂m(state, action; params)/∂params` to `grad`.
    fn accumulate_gradient(&self, params: &[f64], state: &State, action: usize, coef: f64, grad: &mut [f64]);
}

/// `m(x, a) = θ_a · φ(x)`.
#[derive(Debug, Clone)]
pub struct LinearControl {
    pub featurizer: Featurizer,
    pub n_actions: usize,
}

impl ControlFunction for LinearControl {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn n_params(&self) -> usize {
        self.featurizer.dim() * self.n_actions
    }

    fn eval(&self, params: &[f64], state: &State, out: &mut [f64]) {
        let d = self.featurizer.dim();
        out.fill(0.0);
        self.featurizer.for_each(state, |j, x| {
            for (a, o) in out.iter_mut().enumerate() {
                *o += params[a * d + j] * x;
            }
        });
    }

    fn accumulate_gradient(&self, _params: &[f64], state: &State, action: usize, coef: f64, grad: &mut [f64]) {
        let d = self.featurizer.dim();
        let block = &mut grad[action * d..(action + 1) * d];
        self.featurizer.for_each(state, |j, x| block[j] += coef * x);
    }
}

/// `m(x, a) = σ(θ_a · x + b_a)` on the raw state features.
#[derive(Debug, Clone)]
pub struct LogisticControl {
    pub dim: usize,
    pub n_actions: usize,
}

impl LogisticControl {
    fn logit(&self, params: &[f64], x: &[f64], a: usize) -> f64 {
        let w = &params[a * (self.dim + 1)..(a + 1) * (self.dim + 1)];
        w[self.dim] + w[..self.dim].iter().zip(x).map(|(p, v)| p * v).sum::<f64>()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ControlFunction for LogisticControl {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn n_params(&self) -> usize {
        (self.dim + 1) * self.n_actions
    }

    fn eval(&self, params: &[f64], state: &State, out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = sigmoid(self.logit(params, &state.features, a));
        }
    }

    fn accumulate_gradient(&self, params: &[f64], state: &State, action: usize, coef: f64, grad: &mut [f64]) {
        let s = sigmoid(self.logit(params, &state.features, action));
        let c = coef * s * (1.0 - s);
        let block = &mut grad[action * (self.dim + 1)..(action + 1) * (self.dim + 1)];
        for (g, x) in block.iter_mut().zip(&state.features) {
            *g += c * x;
        }
        block[self.dim] += c;
    }
}

#[derive(Debug, Clone)]
struct CvStep {
    state: State,
    action: usize,
    /// `γ^t ω_{0:t}`
    logged_coef: f64,
    /// `γ^t ω_{0:t−1} π_e(·|x_t)`
    expected_coef: Vec<f64>,
}

/// The MDR loss over a dataset for a given control function.
#[derive(Debug)]
pub struct MdrObjective<'a> {
    control: &'a dyn ControlFunction,
    samples: Vec<(Vec<CvStep>, f64)>,
}

impl<'a> MdrObjective<'a> {
    pub fn new(data: &LoggedDataset, pi_e: &dyn Policy, control: &'a dyn ControlFunction) -> Result<Self> {
        let n_actions = data.n_actions();
        if control.n_actions() != n_actions || pi_e.n_actions() != n_actions {
            return Err(OpeError::InvalidData("control function action count mismatch".into()));
        }
        let gamma = data.gamma();
        let mut samples = Vec::with_capacity(data.n());
        let mut pe = vec![0.0; n_actions];
        for traj in data.trajectories() {
            let mut steps = Vec::with_capacity(traj.len());
            let mut w = 1.0;
            let mut disc = 1.0;
            let mut y = 0.0;
            for (t, step) in traj.steps.iter().enumerate() {
                let pb = data.behavior().prob(&step.state, step.action);
                if pb <= 0.0 {
                    return Err(OpeError::ZeroPropensity { state: step.state.id, action: step.action });
                }
                pi_e.probs_into(&step.state, &mut pe);
                let prev = w;
                w *= pe[step.action] / pb;
                if !w.is_finite() {
                    return Err(OpeError::RatioOverflow { step: t });
                }
                y += disc * w * step.reward;
                steps.push(CvStep {
                    state: step.state.clone(),
                    action: step.action,
                    logged_coef: disc * w,
                    expected_coef: pe.iter().map(|p| disc * prev * p).collect(),
                });
                disc *= gamma;
            }
            samples.push((steps, y));
        }
        Ok(MdrObjective { control, samples })
    }

    /// `g_i(θ)` for trajectory `i`.
    pub fn control_variate(&self, i: usize, params: &[f64]) -> f64 {
        let mut m = vec![0.0; self.control.n_actions()];
        let mut g = 0.0;
        for s in &self.samples[i].0 {
            self.control.eval(params, &s.state, &mut m);
            g += s.logged_coef * m[s.action] - s.expected_coef.iter().zip(&m).map(|(c, v)| c * v).sum::<f64>();
        }
        g
    }

    /// `∂g_i/∂θ` added into `grad` with weight `coef`.
    fn accumulate_cv_gradient(&self, i: usize, params: &[f64], coef: f64, grad: &mut [f64]) {
        for s in &self.samples[i].0 {
            self.control.accumulate_gradient(params, &s.state, s.action, coef * s.logged_coef, grad);
            for (a, c) in s.expected_coef.iter().enumerate() {
                if *c != 0.0 {
                    self.control.accumulate_gradient(params, &s.state, a, -coef * c, grad);
                }
            }
        }
    }

    /// Per-trajectory doubly robust values `y_i − g_i(θ)`. Entries of
    /// `params` past the control's own parameters (the centre) are ignored.
    pub fn values(&self, params: &[f64]) -> Vec<f64> {
        let theta = &params[..self.control.n_params()];
        (0..self.samples.len()).map(|i| self.samples[i].1 - self.control_variate(i, theta)).collect()
    }

    /// The empirical variance of `y − g(θ)`.
    pub fn objective(&self, params: &[f64]) -> f64 {
        let v = self.values(params);
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
    }

    /// `E_n[‖∂g_i/∂θ‖²]` at `params`.
    pub fn mean_sq_gradient(&self, params: &[f64]) -> f64 {
        let mut grad = vec![0.0; self.control.n_params()];
        let mut total = 0.0;
        for i in 0..self.samples.len() {
            grad.fill(0.0);
            self.accumulate_cv_gradient(i, params, 1.0, &mut grad);
            total += grad.iter().map(|g| g * g).sum::<f64>();
        }
        total / self.samples.len() as f64
    }
}

impl SgdObjective for MdrObjective<'_> {
    fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// The control's parameters followed by the centre `c`.
    fn n_params(&self) -> usize {
        self.control.n_params() + 1
    }

    fn sample_loss_grad(&self, i: usize, params: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.control.n_params();
        let e = self.samples[i].1 - self.control_variate(i, &params[..d]) - params[d];
        self.accumulate_cv_gradient(i, &params[..d], -2.0 * e, &mut grad[..d]);
        grad[d] -= 2.0 * e;
        e * e
    }
}

/// Result of [`fit_mdr`].
#[derive(Debug, Clone)]
pub struct MdrFit {
    pub params: Vec<f64>,
    pub estimate: f64,
    pub objective: f64,
}

/// Minimises the MDR loss from `θ = 0` (centre at `E_n[v(0)]`) and
/// evaluates the estimator at the final `θ`.
///
/// With `normalize_step`, the SGD step is divided by
/// `max(1, E_n[‖∂g_i/∂θ‖²])` at `θ = 0`, which keeps linear controls on long
/// horizons (where `∂g` scales with the horizon) from diverging.
pub fn fit_mdr(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    control: &dyn ControlFunction,
    cfg: &SgdConfig,
    normalize_step: bool,
) -> Result<MdrFit> {
    let obj = MdrObjective::new(data, pi_e, control)?;
    let d = control.n_params();
    let mut init = vec![0.0; d + 1];
    let start = obj.values(&init);
    init[d] = start.iter().sum::<f64>() / start.len() as f64;
    let mut cfg = *cfg;
    if normalize_step {
        cfg.step /= obj.mean_sq_gradient(&init[..d]).max(1.0);
    }
    let mut params = sgd_minimize(&obj, &init, &cfg)?;
    params.truncate(d);
    let values = obj.values(&params);
    let n = values.len() as f64;
    let estimate = values.iter().sum::<f64>() / n;
    let objective = obj.objective(&params);
    if !estimate.is_finite() || !objective.is_finite() {
        return Err(OpeError::SolverDiverged("MDR fit produced a non-finite value".into()));
    }
    Ok(MdrFit { params, estimate, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Step, Trajectory};
    use crate::policy::TabularPolicy;
    use std::sync::Arc;

    fn dataset() -> (LoggedDataset, TabularPolicy) {
        let pi_b = TabularPolicy::new(vec![vec![0.5, 0.5], vec![0.4, 0.6]]).unwrap();
        let pi_e = TabularPolicy::new(vec![vec![0.8, 0.2], vec![0.1, 0.9]]).unwrap();
        let mut trajs = Vec::new();
        for i in 0..12 {
            trajs.push(Trajectory::new(vec![
                Step::new(State::with_features(0, vec![1.0, -0.5]), i % 2, 0.3 * (i % 3) as f64),
                Step::new(State::with_features(1, vec![0.2, 0.7]), (i / 2) % 2, 0.1 * (i % 4) as f64),
            ]));
        }
        (LoggedDataset::new(trajs, Arc::new(pi_b), 2, 0.9, 1.0).unwrap(), pi_e)
    }

    fn x_dim(obj: &MdrObjective) -> usize {
        obj.control.n_params()
    }

    fn finite_difference(obj: &MdrObjective, i: usize, p: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..p.len())
            .map(|k| {
                let mut hi = p.to_vec();
                let mut lo = p.to_vec();
                hi[k] += h;
                lo[k] -= h;
                let d = x_dim(obj);
                let f = |x: &[f64]| (obj.samples[i].1 - obj.control_variate(i, &x[..d]) - x[d]).powi(2);
                (f(&hi) - f(&lo)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (data, pi_e) = dataset();
        let logistic = LogisticControl { dim: 2, n_actions: 2 };
        let linear = LinearControl { featurizer: Featurizer::OneHot { n_states: 2 }, n_actions: 2 };
        for control in [&logistic as &dyn ControlFunction, &linear] {
            let obj = MdrObjective::new(&data, &pi_e, control).unwrap();
            let p: Vec<f64> = (0..control.n_params() + 1).map(|k| 0.3 - 0.1 * k as f64).collect();
            for i in 0..data.n() {
                let mut g = vec![0.0; p.len()];
                obj.sample_loss_grad(i, &p, &mut g);
                for (a, b) in g.iter().zip(finite_difference(&obj, i, &p)) {
                    assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn frozen_zero_control_gives_sis() {
        let (data, pi_e) = dataset();
        let linear = LinearControl { featurizer: Featurizer::OneHot { n_states: 2 }, n_actions: 2 };
        let cfg = SgdConfig { epochs: 0, ..Default::default() };
        let fit = fit_mdr(&data, &pi_e, &linear, &cfg, false).unwrap();
        let sis = crate::rl::rl_is_family(&data, &pi_e, true, false).unwrap().estimate;
        assert!((fit.estimate - sis).abs() < 1e-15);
    }
}
