//! Contextual-bandit (`T = 1`) estimators.
//!
//! Every function takes the logged data, the evaluation policy and (where
//! relevant) pre-fitted Q-models, and returns an [`EstimatorReport`].
//! REG, SNREG and EMP build their control variate from the basis
//! `(1, q_1, …, q_J)`; [`fit_reg`] and [`fit_emp`] are shared with the
//! multi-step estimators in [`crate::rl`].

use nalgebra::{DMatrix, DVector};

use crate::control::{fit_mdr, ControlFunction};
use crate::data::LoggedDataset;
use crate::error::{OpeError, Result};
use crate::optim::concave::{maximize_concave, EmpiricalLikelihood, NewtonConfig};
use crate::optim::least_squares::fit_quadratic;
use crate::optim::sgd::SgdConfig;
use crate::policy::Policy;
use crate::qmodel::QModel;
use crate::report::{ControlVariateParams, CvRole, EstimatorReport};
use crate::terms::PreparedData;

/// `1 + g` values below this at the solution mark the positivity
/// constraint as binding.
const BINDING_SLACK: f64 = 1e-6;

fn require_bandit(data: &LoggedDataset) -> Result<()> {
    if data.horizon() != 1 {
        return Err(OpeError::InvalidData(format!(
            "bandit estimators need horizon 1, got {}",
            data.horizon()
        )));
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

fn report(method: &str, estimate: f64, p: &PreparedData) -> EstimatorReport {
    EstimatorReport::new(method, estimate, p.return_bound(), p.max_weight())
}

/// `E_n[Σ_a π_e(a|x_0) q(x_0, a)]` over the first state of every trajectory.
pub fn dm_value(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy) -> f64 {
    let mut pe = vec![0.0; pi_e.n_actions()];
    let mut qv = vec![0.0; q.n_actions()];
    mean(data.trajectories().iter().map(|t| {
        let x = &t.steps[0].state;
        pi_e.probs_into(x, &mut pe);
        q.values_into(x, &mut qv);
        pe.iter().zip(&qv).map(|(p, v)| p * v).sum::<f64>()
    }))
}

/// Direct method.
pub fn dm_estimate(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, &[])?;
    Ok(report("dm", dm_value(data, q, pi_e), &p))
}

/// `E_n[w r]`.
pub fn is_estimate(data: &LoggedDataset, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, &[])?;
    Ok(report("is", mean(p.trajectories().iter().map(|t| t.sis_value())), &p))
}

fn mean_weight(p: &PreparedData) -> Result<f64> {
    let w = mean(p.trajectories().iter().map(|t| t.final_ratio()));
    if !(w > 0.0) {
        return Err(OpeError::DegenerateWeights);
    }
    Ok(w)
}

/// `E_n[w r] / E_n[w]`.
pub fn snis_estimate(data: &LoggedDataset, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, &[])?;
    let w = mean_weight(&p)?;
    Ok(report("snis", mean(p.trajectories().iter().map(|t| t.sis_value())) / w, &p))
}

/// `E_n[w r − F(q)]`.
pub fn dr_estimate(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, &[q])?;
    let params = ControlVariateParams::shared(vec![0.0, 1.0]);
    let est = mean(p.trajectories().iter().map(|t| t.sis_value() - t.control_variate(&params)));
    let mut r = report("dr", est, &p);
    r.fitted_params = Some(params);
    Ok(r)
}

/// `E_n[Σ_a m π_e] + E_n[w (r − m)] / E_n[w]` for `m = Σ_j ζ_j φ_j`.
fn snd_value(p: &PreparedData, zeta: &[f64]) -> Result<f64> {
    let w = mean_weight(p)?;
    let basis = p.basis_len();
    let mut direct = 0.0;
    let mut resid = 0.0;
    for t in p.trajectories() {
        let m_exp: f64 = (0..basis).map(|j| zeta[j] * t.basis_expected(0, j)).sum();
        let m_log: f64 = (0..basis).map(|j| zeta[j] * t.basis_logged(0, j)).sum();
        direct += m_exp;
        resid += t.final_ratio() * (t.rewards()[0] - m_log);
    }
    let n = p.n() as f64;
    Ok(direct / n + resid / n / w)
}

/// Self-normalised doubly robust estimator with `m = q`.
pub fn sndr_estimate(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, &[q])?;
    let mut r = report("sndr", snd_value(&p, &[0.0, 1.0])?, &p);
    r.fitted_params = Some(ControlVariateParams::shared(vec![0.0, 1.0]));
    Ok(r)
}

/// The self-normalised doubly robust form at fixed coefficients `zeta` on the
/// basis `(1, q_1, …)`.
pub fn snd_estimate_at(
    data: &LoggedDataset,
    qs: &[&dyn QModel],
    pi_e: &dyn Policy,
    zeta: &[f64],
) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, qs)?;
    if zeta.len() != p.basis_len() {
        return Err(OpeError::InvalidConfig("coefficient count does not match the basis".into()));
    }
    let mut r = report("snd", snd_value(&p, zeta)?, &p);
    r.fitted_params = Some(ControlVariateParams::new(CvRole::Fixed, vec![zeta.to_vec()]));
    Ok(r)
}

/// DR with `m` fitted by SGD on the empirical variance of the DR terms.
pub fn mdr_estimate(
    data: &LoggedDataset,
    control: &dyn ControlFunction,
    pi_e: &dyn Policy,
    cfg: &SgdConfig,
) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, &[])?;
    let fit = fit_mdr(data, pi_e, control, cfg, false)?;
    let mut r = report("mdr", fit.estimate, &p);
    r.objective_value = Some(fit.objective);
    r.solver_iters = Some(cfg.epochs);
    Ok(r)
}

/// Which empirical criterion REG minimises over `ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegCriterion {
    /// `E_n[(y − Gζ)²]`, the bandit objective.
    SecondMoment,
    /// The empirical variance of `y − Gζ`, the multi-step objective. Unlike
    /// the second moment it does not pull the estimate toward zero when the
    /// policy value is far from it.
    Variance,
}

/// Outcome of [`fit_reg`].
#[derive(Debug, Clone)]
pub struct RegFit {
    pub zeta: DVector<f64>,
    pub estimate: f64,
    /// The criterion at the solution.
    pub objective: f64,
    pub singular: bool,
}

/// The REG criterion at arbitrary `ζ`.
pub fn cv_objective(p: &PreparedData, k: usize, zeta: &DVector<f64>, criterion: RegCriterion) -> f64 {
    let resid = p.sis_values() - p.design(k) * zeta;
    let n = p.n() as f64;
    match criterion {
        RegCriterion::SecondMoment => resid.norm_squared() / n,
        RegCriterion::Variance => {
            let m = resid.mean();
            resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n
        }
    }
}

/// Minimises `criterion` for the per-trajectory DR value over the
/// `k`-constrained coefficients.
pub fn fit_reg(p: &PreparedData, k: usize, criterion: RegCriterion) -> RegFit {
    let y = p.sis_values();
    let design = p.design(k);
    let fit = match criterion {
        RegCriterion::SecondMoment => fit_quadratic(design.clone(), y.clone()),
        RegCriterion::Variance => {
            let mut centred = design.clone();
            for mut col in centred.column_iter_mut() {
                let m = col.mean();
                col.add_scalar_mut(-m);
            }
            let ym = y.mean();
            fit_quadratic(centred, y.map(|v| v - ym))
        }
    };
    let resid = &y - &design * &fit.coefficients;
    RegFit { estimate: resid.mean(), objective: fit.objective, singular: fit.singular, zeta: fit.coefficients }
}

/// Outcome of [`fit_emp`].
#[derive(Debug, Clone)]
pub struct EmpFit {
    pub xi: DVector<f64>,
    pub estimate: f64,
    /// `ĉ⁻¹ / (n (1 + g_i))`; positive and summing to 1.
    pub weights: DVector<f64>,
    /// `E_n[log(1 + g)]` at the solution.
    pub objective: f64,
    pub iterations: usize,
    /// Gradient ∞-norm at the solution.
    pub stationarity: f64,
    pub binding: bool,
}

/// Maximises `E_n[log(1 + G_i ξ)]` from `ξ = 0` and reweights the step-wise
/// IS values by the resulting likelihood weights.
pub fn fit_emp(p: &PreparedData, k: usize) -> Result<EmpFit> {
    fit_emp_design(p.design(k), p.sis_values())
}

/// [`fit_emp`] on an explicit design matrix and target vector.
pub fn fit_emp_design(design: DMatrix<f64>, y: DVector<f64>) -> Result<EmpFit> {
    let el = EmpiricalLikelihood::new(design);
    let out = maximize_concave(&el, DVector::zeros(el.design().ncols()), &NewtonConfig::default())?;
    let slacks = el.slacks(&out.x);
    let inv = slacks.map(|s| 1.0 / s);
    let c_hat = inv.mean();
    let n = y.len() as f64;
    let weights = inv / (c_hat * n);
    let estimate = weights.dot(&y);
    let binding = slacks.iter().any(|s| *s < BINDING_SLACK);
    Ok(EmpFit {
        xi: out.x,
        estimate,
        weights,
        objective: out.value,
        iterations: out.iterations,
        stationarity: out.grad_norm,
        binding,
    })
}

fn basis_of(qs: &[&dyn QModel]) -> usize {
    qs.len() + 1
}

/// REG with `m = ζ_0 + Σ_j ζ_j q_j`.
pub fn reg_estimate(data: &LoggedDataset, qs: &[&dyn QModel], pi_e: &dyn Policy) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, qs)?;
    let fit = fit_reg(&p, 0, RegCriterion::SecondMoment);
    let mut r = report("reg", fit.estimate, &p);
    r.fitted_params = Some(ControlVariateParams::from_flat(CvRole::Reg, fit.zeta.as_slice(), basis_of(qs)));
    r.objective_value = Some(fit.objective);
    r.singular_design = fit.singular;
    Ok(r)
}

/// Self-normalised REG: minimises the sample variance of the estimated
/// influence function of the self-normalised DR form over `ζ`.
///
/// That influence function is
/// `ψ_i = Σ_a m π_e + w_i (r_i − m_i) − w_i E_n[w(r − m)] / E_n[w]`,
/// affine in `ζ`, so the minimiser is a least-squares solution. The
/// intercept only shifts `ψ` and is left at 0.
pub fn snreg_estimate(data: &LoggedDataset, qs: &[&dyn QModel], pi_e: &dyn Policy) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, qs)?;
    let mean_w = mean_weight(&p)?;
    let n = p.n();
    let basis = p.basis_len();
    let snis = mean(p.trajectories().iter().map(|t| t.sis_value())) / mean_w;
    let wphi: Vec<f64> = (0..basis)
        .map(|j| mean(p.trajectories().iter().map(|t| t.final_ratio() * t.basis_logged(0, j))) / mean_w)
        .collect();
    let mut a = DVector::zeros(n);
    let mut b = DMatrix::zeros(n, basis);
    for (i, t) in p.trajectories().iter().enumerate() {
        let w = t.final_ratio();
        a[i] = w * (t.rewards()[0] - snis);
        for j in 0..basis {
            b[(i, j)] = t.basis_expected(0, j) - w * t.basis_logged(0, j) + w * wphi[j];
        }
    }
    let a_mean = a.mean();
    a.add_scalar_mut(-a_mean);
    for j in 0..basis {
        let m = b.column(j).mean();
        b.column_mut(j).add_scalar_mut(-m);
    }
    let fit = fit_quadratic(b, -a);
    let zeta = fit.coefficients;
    let est = snd_value(&p, zeta.as_slice())?;
    let mut r = report("snreg", est, &p);
    r.fitted_params = Some(ControlVariateParams::from_flat(CvRole::Snreg, zeta.as_slice(), basis));
    r.objective_value = Some(fit.objective);
    r.singular_design = fit.singular;
    Ok(r)
}

/// EMP with `m = ξ_0 + Σ_j ξ_j q_j`.
pub fn emp_estimate(data: &LoggedDataset, qs: &[&dyn QModel], pi_e: &dyn Policy) -> Result<EstimatorReport> {
    require_bandit(data)?;
    let p = PreparedData::new(data, pi_e, qs)?;
    let fit = fit_emp(&p, 0)?;
    let mut r = report("emp", fit.estimate, &p);
    r.fitted_params = Some(ControlVariateParams::from_flat(CvRole::Emp, fit.xi.as_slice(), basis_of(qs)));
    r.objective_value = Some(fit.objective);
    r.solver_iters = Some(fit.iterations);
    r.constraint_binding = fit.binding;
    Ok(r)
}
