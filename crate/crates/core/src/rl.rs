//! Multi-step estimators.
//!
//! Returns are `Σ_{t<T} γ^t r_t`; trajectories that ended before the horizon
//! are padded implicitly (see [`crate::data`]). The REG and EMP variants take
//! `k` and use `m_t = ζ_{min(t,k),0} + ζ_{min(t,k),1} q`, so steps `t < k`
//! get their own coefficients and all later steps share one pair.

use crate::cb::{dm_value, fit_emp, fit_reg, RegCriterion};
use crate::control::{fit_mdr, ControlFunction};
use crate::data::LoggedDataset;
use crate::error::{OpeError, Result};
use crate::optim::sgd::SgdConfig;
use crate::policy::Policy;
use crate::qmodel::QModel;
use crate::report::{ControlVariateParams, CvRole, EstimatorReport};
use crate::terms::PreparedData;

fn report(method: &str, estimate: f64, p: &PreparedData) -> EstimatorReport {
    EstimatorReport::new(method, estimate, p.return_bound(), p.max_weight())
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

/// IS (`stepwise = false`) or step-wise IS, optionally self-normalised.
///
/// Self-normalised IS divides by `E_n[ω_{0:T−1}]`; self-normalised step-wise
/// IS divides each step's term by `E_n[ω_{0:t}]`.
pub fn rl_is_family(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    stepwise: bool,
    self_normalized: bool,
) -> Result<EstimatorReport> {
    let p = PreparedData::new(data, pi_e, &[])?;
    let n = p.n();
    let trajs = p.trajectories();
    let (method, est) = match (stepwise, self_normalized) {
        (false, false) => ("is", mean(trajs.iter().map(|t| t.is_value()), n)),
        (true, false) => ("sis", mean(trajs.iter().map(|t| t.sis_value()), n)),
        (false, true) => {
            let w = mean(trajs.iter().map(|t| t.final_ratio()), n);
            if !(w > 0.0) {
                return Err(OpeError::DegenerateWeights);
            }
            ("snis", mean(trajs.iter().map(|t| t.is_value()), n) / w)
        }
        (true, true) => {
            let max_len = trajs.iter().map(|t| t.len()).max().unwrap_or(0);
            let w = p.mean_cum_ratios();
            let mut est = 0.0;
            for t in 0..max_len {
                let num: f64 = trajs
                    .iter()
                    .filter(|tr| t < tr.len())
                    .map(|tr| tr.discounts()[t] * tr.cum_ratios()[t] * tr.rewards()[t])
                    .sum::<f64>()
                    / n as f64;
                if num == 0.0 {
                    continue;
                }
                if !(w[t] > 0.0) {
                    return Err(OpeError::DegenerateWeights);
                }
                est += num / w[t];
            }
            ("snsis", est)
        }
    };
    Ok(report(method, est, &p))
}

/// Step-wise IS normalised by the single denominator `E_n[ω_{0:T−1}]`.
pub fn sn2sis_estimate(data: &LoggedDataset, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    let p = PreparedData::new(data, pi_e, &[])?;
    let n = p.n();
    let w = mean(p.trajectories().iter().map(|t| t.final_ratio()), n);
    if !(w > 0.0) {
        return Err(OpeError::DegenerateWeights);
    }
    Ok(report("sn2sis", mean(p.trajectories().iter().map(|t| t.sis_value()), n) / w, &p))
}

/// Direct method: `E_n[Σ_a π_e(a|x_0) q(x_0, a)]`.
pub fn rl_dm_estimate(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    let p = PreparedData::new(data, pi_e, &[])?;
    Ok(report("dm", dm_value(data, q, pi_e), &p))
}

/// Doubly robust with `m_t = q` at every step.
pub fn rl_dr_estimate(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    let p = PreparedData::new(data, pi_e, &[q])?;
    let params = ControlVariateParams::shared(vec![0.0, 1.0]);
    let est = mean(p.trajectories().iter().map(|t| t.sis_value() - t.control_variate(&params)), p.n());
    let mut r = report("dr", est, &p);
    r.fitted_params = Some(params);
    Ok(r)
}

/// Doubly robust with every `ω_{0:t}` replaced by `ω_{0:t} / E_n[ω_{0:t}]`
/// (and `ω_{0:−1} = 1`).
pub fn rl_sndr_estimate(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy) -> Result<EstimatorReport> {
    let p = PreparedData::new(data, pi_e, &[q])?;
    let w = p.mean_cum_ratios();
    let max_len = p.trajectories().iter().map(|t| t.len()).max().unwrap_or(0);
    if w[..max_len].iter().any(|v| !(*v > 0.0)) {
        return Err(OpeError::DegenerateWeights);
    }
    let mut total = 0.0;
    for tr in p.trajectories() {
        for t in 0..tr.len() {
            let cur = tr.cum_ratios()[t] / w[t];
            let prev = if t == 0 { tr.prev_ratios()[0] } else { tr.prev_ratios()[t] / w[t - 1] };
            let d = tr.discounts()[t];
            total += d * (cur * tr.rewards()[t] - cur * tr.basis_logged(t, 1) + prev * tr.basis_expected(t, 1));
        }
    }
    let mut r = report("sndr", total / p.n() as f64, &p);
    r.fitted_params = Some(ControlVariateParams::shared(vec![0.0, 1.0]));
    Ok(r)
}

/// MDR with `m` fitted by SGD; the step is scaled down by the mean squared
/// norm of `∂g_i/∂θ` at 0 when that exceeds 1.
pub fn rl_mdr_estimate(
    data: &LoggedDataset,
    control: &dyn ControlFunction,
    pi_e: &dyn Policy,
    cfg: &SgdConfig,
) -> Result<EstimatorReport> {
    let p = PreparedData::new(data, pi_e, &[])?;
    let fit = fit_mdr(data, pi_e, control, cfg, true)?;
    let mut r = report("mdr", fit.estimate, &p);
    r.objective_value = Some(fit.objective);
    r.solver_iters = Some(cfg.epochs);
    Ok(r)
}

fn check_k(data: &LoggedDataset, k: usize) -> Result<()> {
    if k >= data.horizon() {
        return Err(OpeError::InvalidConfig(format!("k = {k} must be below the horizon {}", data.horizon())));
    }
    Ok(())
}

/// REG over `k + 1` coefficient blocks, minimising the empirical variance
/// of the per-trajectory DR value.
pub fn rl_reg_estimate(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy, k: usize) -> Result<EstimatorReport> {
    check_k(data, k)?;
    let p = PreparedData::new(data, pi_e, &[q])?;
    let fit = fit_reg(&p, k, RegCriterion::Variance);
    let mut r = report("reg", fit.estimate, &p);
    r.fitted_params = Some(ControlVariateParams::from_flat(CvRole::Reg, fit.zeta.as_slice(), 2));
    r.objective_value = Some(fit.objective);
    r.singular_design = fit.singular;
    Ok(r)
}

/// EMP over `k + 1` coefficient blocks.
pub fn rl_emp_estimate(data: &LoggedDataset, q: &dyn QModel, pi_e: &dyn Policy, k: usize) -> Result<EstimatorReport> {
    check_k(data, k)?;
    let p = PreparedData::new(data, pi_e, &[q])?;
    let fit = fit_emp(&p, k)?;
    let mut r = report("emp", fit.estimate, &p);
    r.fitted_params = Some(ControlVariateParams::from_flat(CvRole::Emp, fit.xi.as_slice(), 2));
    r.objective_value = Some(fit.objective);
    r.solver_iters = Some(fit.iterations);
    r.constraint_binding = fit.binding;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cb;
    use crate::data::{State, Step, Trajectory};
    use crate::policy::TabularPolicy;
    use crate::qmodel::{AnyQ, TabularQ};
    use std::sync::Arc;

    fn pols() -> (TabularPolicy, TabularPolicy) {
        (
            TabularPolicy::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap(),
            TabularPolicy::new(vec![vec![0.9, 0.1], vec![0.6, 0.4]]).unwrap(),
        )
    }

    fn traj(steps: &[(usize, usize, f64)]) -> Trajectory {
        Trajectory::new(steps.iter().map(|&(s, a, r)| Step::new(State::discrete(s), a, r)).collect())
    }

    fn dataset(pi_b: TabularPolicy) -> LoggedDataset {
        let trajs = vec![
            traj(&[(0, 0, 0.5), (1, 1, 1.0), (0, 0, 0.0)]),
            traj(&[(1, 0, 0.2), (0, 1, 0.4)]),
            traj(&[(0, 1, 1.0), (1, 0, 0.3), (1, 1, 0.6)]),
            traj(&[(1, 1, 0.0)]),
        ];
        LoggedDataset::new(trajs, Arc::new(pi_b), 3, 0.9, 1.0).unwrap()
    }

    fn q() -> TabularQ {
        TabularQ { n_actions: 2, table: vec![0.4, 0.8, 0.1, 0.3], clip: None }
    }

    #[test]
    fn identical_policies_give_mean_return() {
        let (pi_b, _) = pols();
        let d = dataset(pi_b.clone());
        let mean_ret: f64 = d.trajectories().iter().map(|t| t.discounted_return(0.9)).sum::<f64>() / 4.0;
        for (s, n) in [(false, false), (true, false), (false, true), (true, true)] {
            let e = rl_is_family(&d, &pi_b, s, n).unwrap().estimate;
            assert!((e - mean_ret).abs() < 1e-14);
        }
        assert!((sn2sis_estimate(&d, &pi_b).unwrap().estimate - mean_ret).abs() < 1e-14);
    }

    #[test]
    fn single_step_matches_bandit() {
        let (pi_b, pi_e) = pols();
        let samples = vec![
            Step::new(State::discrete(0), 0, 0.5),
            Step::new(State::discrete(1), 1, 1.0),
            Step::new(State::discrete(1), 0, 0.2),
            Step::new(State::discrete(0), 1, 0.7),
            Step::new(State::discrete(0), 0, 0.1),
            Step::new(State::discrete(1), 1, 0.4),
        ];
        let d = LoggedDataset::from_bandit(samples, Arc::new(pi_b), 1.0).unwrap();
        let is = cb::is_estimate(&d, &pi_e).unwrap().estimate;
        let snis = cb::snis_estimate(&d, &pi_e).unwrap().estimate;
        assert_eq!(rl_is_family(&d, &pi_e, false, false).unwrap().estimate, is);
        assert_eq!(rl_is_family(&d, &pi_e, true, false).unwrap().estimate, is);
        assert!((rl_is_family(&d, &pi_e, false, true).unwrap().estimate - snis).abs() < 1e-15);
        assert!((rl_is_family(&d, &pi_e, true, true).unwrap().estimate - snis).abs() < 1e-15);
        assert!((sn2sis_estimate(&d, &pi_e).unwrap().estimate - snis).abs() < 1e-15);
        let q = q();
        let sndr = cb::sndr_estimate(&d, &q, &pi_e).unwrap().estimate;
        assert!((rl_sndr_estimate(&d, &q, &pi_e).unwrap().estimate - sndr).abs() < 1e-15);
        let p = PreparedData::new(&d, &pi_e, &[&q]).unwrap();
        let reg = cb::fit_reg(&p, 0, RegCriterion::Variance).estimate;
        assert!((rl_reg_estimate(&d, &q, &pi_e, 0).unwrap().estimate - reg).abs() < 1e-14);
        let emp = cb::emp_estimate(&d, &[&q], &pi_e).unwrap().estimate;
        assert!((rl_emp_estimate(&d, &q, &pi_e, 0).unwrap().estimate - emp).abs() < 1e-14);
    }

    #[test]
    fn sn2sis_hand_fixture() {
        // single-step trajectories with weights (2, 1, 0.5)
        let pi_b = TabularPolicy::new(vec![vec![0.25, 0.75], vec![0.5, 0.5], vec![0.8, 0.2]]).unwrap();
        let pi_e = TabularPolicy::new(vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.4, 0.6]]).unwrap();
        let d = LoggedDataset::new(
            vec![traj(&[(0, 0, 0.3)]), traj(&[(1, 1, 0.6)]), traj(&[(2, 0, 0.9)])],
            Arc::new(pi_b),
            2,
            1.0,
            1.0,
        )
        .unwrap();
        let expect = (2.0 * 0.3 + 0.6 + 0.5 * 0.9) / (2.0 + 1.0 + 0.5);
        assert!((sn2sis_estimate(&d, &pi_e).unwrap().estimate - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_q_reductions() {
        let (pi_b, pi_e) = pols();
        let d = dataset(pi_b);
        let zero = AnyQ::zero(2);
        assert_eq!(
            rl_dr_estimate(&d, &zero, &pi_e).unwrap().estimate,
            rl_is_family(&d, &pi_e, true, false).unwrap().estimate
        );
        let snsis = rl_is_family(&d, &pi_e, true, true).unwrap().estimate;
        assert!((rl_sndr_estimate(&d, &zero, &pi_e).unwrap().estimate - snsis).abs() < 1e-14);
    }

    #[test]
    fn sndr_identical_policies_by_hand() {
        let pi = TabularPolicy::new(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        let d = LoggedDataset::new(
            vec![traj(&[(0, 0, 1.0), (1, 1, 0.5)]), traj(&[(1, 0, 0.0)])],
            Arc::new(pi.clone()),
            2,
            1.0,
            1.0,
        )
        .unwrap();
        let q = q();
        // ratios are 1, so each step contributes r − q(x,a) + Σ_a π q
        let v0 = 0.5 * 0.4 + 0.5 * 0.8;
        let v1 = 0.2 * 0.1 + 0.8 * 0.3;
        let expect = ((1.0 - 0.4 + v0) + (0.5 - 0.3 + v1) + (0.0 - 0.1 + v1)) / 2.0;
        assert!((rl_sndr_estimate(&d, &q, &pi).unwrap().estimate - expect).abs() < 1e-15);
    }

    #[test]
    fn reg_dominates_sis_and_dr() {
        let (pi_b, pi_e) = pols();
        let d = dataset(pi_b);
        let q = q();
        let p = PreparedData::new(&d, &pi_e, &[&q]).unwrap();
        for k in 0..3 {
            let fit = fit_reg(&p, k, RegCriterion::Variance);
            let zeros = nalgebra::DVector::zeros(2 * (k + 1));
            let dr = nalgebra::DVector::from_fn(2 * (k + 1), |i, _| (i % 2) as f64);
            assert!(fit.objective <= cb::cv_objective(&p, k, &zeros, RegCriterion::Variance) + 1e-12);
            assert!(fit.objective <= cb::cv_objective(&p, k, &dr, RegCriterion::Variance) + 1e-12);
        }
        assert!(rl_reg_estimate(&d, &q, &pi_e, 3).is_err());
    }
}
