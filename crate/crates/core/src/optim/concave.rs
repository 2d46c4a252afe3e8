//! Damped Newton ascent for smooth concave objectives on open domains.

use nalgebra::{DMatrix, DVector};

use crate::error::{OpeError, Result};

/// A smooth concave function with an open feasible region.
///
/// [`maximize_concave`] only evaluates `value`, `gradient` and `hessian` at
/// points for which `is_feasible` returned true.
pub trait ConcaveObjective {
    fn dim(&self) -> usize;
    fn is_feasible(&self, x: &DVector<f64>) -> bool;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Stop once the gradient's ∞-norm and the Newton decrement both fall
    /// below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-9, max_iter: 100, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Solves `H d = −g` for an ascent direction, falling back to a
/// pseudo-inverse when `−H` is not numerically positive definite.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let neg = -hess;
    if let Some(chol) = neg.clone().cholesky() {
        let d = chol.solve(grad);
        if d.iter().all(|v| v.is_finite()) {
            return d;
        }
    }
    let svd = neg.svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    svd.solve(grad, smax * 1e-12).unwrap_or_else(|_| grad.clone())
}

/// Maximises `obj` from a strictly feasible `start`.
///
/// Each iteration takes a Newton step and halves it until the trial point is
/// feasible and the objective increases sufficiently. Returns once the
/// gradient ∞-norm and the Newton decrement are below `cfg.tol`; fails with
/// [`OpeError::SolverDiverged`] after `cfg.max_iter` iterations or when no
/// ascent step can be found.
pub fn maximize_concave<O: ConcaveObjective + ?Sized>(
    obj: &O,
    start: DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    if !obj.is_feasible(&start) {
        return Err(OpeError::InfeasibleStart);
    }
    let mut x = start;
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut trace = vec![f];
    for iter in 0..=cfg.max_iter {
        let gnorm = g.amax();
        if !gnorm.is_finite() || !f.is_finite() {
            return Err(OpeError::SolverDiverged("non-finite objective or gradient".into()));
        }
        let mut d = newton_direction(&obj.hessian(&x), &g);
        let mut slope = g.dot(&d);
        // A small gradient alone is not enough: along an unbounded direction
        // of a log-barrier objective the gradient decays while the Newton
        // decrement g·d stays of order one.
        if gnorm < cfg.tol && slope < cfg.tol {
            return Ok(NewtonOutcome { x, value: f, iterations: iter, grad_norm: gnorm, trace });
        }
        if iter == cfg.max_iter {
            break;
        }
        if !(slope > 0.0) {
            d = g.clone();
            slope = g.norm_squared();
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let trial = &x + &d * step;
            if obj.is_feasible(&trial) {
                let ft = obj.value(&trial);
                if ft >= f + cfg.armijo * step * slope {
                    accepted = Some((trial, ft, None));
                    break;
                }
                if ft >= f {
                    // rounding-level regime: accept only if the gradient shrinks
                    let gt = obj.gradient(&trial);
                    if gt.amax() < gnorm {
                        accepted = Some((trial, ft, Some(gt)));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, ft, gt)) => {
                x = trial;
                f = ft;
                g = gt.unwrap_or_else(|| obj.gradient(&x));
                trace.push(f);
            }
            None => {
                return Err(OpeError::SolverDiverged(format!(
                    "line search failed at iteration {iter} (gradient norm {gnorm:.3e})"
                )))
            }
        }
    }
    Err(OpeError::SolverDiverged(format!(
        "no convergence after {} iterations (gradient norm {:.3e})",
        cfg.max_iter,
        g.amax()
    )))
}

/// `L(ξ) = E_n[log(1 + G_i·ξ)]` over the rows `G_i` of a design matrix,
/// feasible where every `1 + G_i·ξ` exceeds `min_slack`.
#[derive(Debug, Clone)]
pub struct EmpiricalLikelihood {
    design: DMatrix<f64>,
    min_slack: f64,
}

impl EmpiricalLikelihood {
    pub const DEFAULT_MIN_SLACK: f64 = 1e-8;

    pub fn new(design: DMatrix<f64>) -> Self {
        EmpiricalLikelihood { design, min_slack: Self::DEFAULT_MIN_SLACK }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn min_slack(&self) -> f64 {
        self.min_slack
    }

    /// `1 + G_i·ξ` for every row.
    pub fn slacks(&self, xi: &DVector<f64>) -> DVector<f64> {
        (&self.design * xi).add_scalar(1.0)
    }
}

impl ConcaveObjective for EmpiricalLikelihood {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn is_feasible(&self, x: &DVector<f64>) -> bool {
        self.slacks(x).iter().all(|s| *s > self.min_slack)
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let s = self.slacks(x);
        s.iter().map(|v| v.ln()).sum::<f64>() / s.len() as f64
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let s = self.slacks(x);
        let inv = s.map(|v| 1.0 / v);
        self.design.transpose() * inv / s.len() as f64
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let s = self.slacks(x);
        let n = s.len() as f64;
        let mut scaled = self.design.clone();
        for (i, si) in s.iter().enumerate() {
            let f = 1.0 / si;
            scaled.row_mut(i).scale_mut(f);
        }
        -(scaled.transpose() * scaled) / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Bowl;

    impl ConcaveObjective for Bowl {
        fn dim(&self) -> usize {
            3
        }
        fn is_feasible(&self, _: &DVector<f64>) -> bool {
            true
        }
        fn value(&self, x: &DVector<f64>) -> f64 {
            -x.norm_squared()
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            -2.0 * x
        }
        fn hessian(&self, _: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(3, 3) * -2.0
        }
    }

    #[test]
    fn bowl_in_one_step() {
        let out = maximize_concave(&Bowl, DVector::from_vec(vec![1.0, -2.0, 3.0]), &NewtonConfig::default())
            .unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.x.amax() < 1e-15);
    }

    #[test]
    fn start_at_optimum_returns_immediately() {
        let out = maximize_concave(&Bowl, DVector::zeros(3), &NewtonConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn infeasible_start() {
        let el = EmpiricalLikelihood::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        let err = maximize_concave(&el, DVector::from_vec(vec![2.0]), &NewtonConfig::default()).unwrap_err();
        assert_eq!(err, OpeError::InfeasibleStart);
    }

    #[test]
    fn unbounded_problem_diverges() {
        // all rows positive: log(1 + g ξ) grows without bound as ξ → ∞
        let el = EmpiricalLikelihood::new(DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 0.5]));
        let err = maximize_concave(&el, DVector::zeros(1), &NewtonConfig::default()).unwrap_err();
        assert_eq!(err.name(), "SolverDiverged");
    }

    #[test]
    fn el_two_point_closed_form() {
        // rows (a, -b): optimum where a/(1+aξ) = b/(1-bξ), i.e. ξ = (a-b)/(2ab)
        let (a, b) = (2.0, 0.5);
        let el = EmpiricalLikelihood::new(DMatrix::from_row_slice(2, 1, &[a, -b]));
        let out = maximize_concave(&el, DVector::zeros(1), &NewtonConfig::default()).unwrap();
        assert!((out.x[0] - (a - b) / (2.0 * a * b)).abs() < 1e-8, "{out:?}");
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
