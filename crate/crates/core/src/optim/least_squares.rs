//! Linear least squares via the normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{OpeError, Result};

/// Relative pivot size below which the Gram matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

/// `min_ζ ‖targets − regressors·ζ‖² + jitter·‖ζ‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquaresProblem {
    pub targets: DVector<f64>,
    pub regressors: DMatrix<f64>,
    pub jitter: f64,
}

impl LeastSquaresProblem {
    pub fn new(regressors: DMatrix<f64>, targets: DVector<f64>) -> Self {
        LeastSquaresProblem { targets, regressors, jitter: 0.0 }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    /// Mean squared residual at `zeta`.
    pub fn objective(&self, zeta: &DVector<f64>) -> f64 {
        let r = &self.targets - &self.regressors * zeta;
        r.norm_squared() / self.targets.len() as f64
    }
}

/// Solves the normal equations by Cholesky.
///
/// Fails with [`OpeError::SingularDesign`] when `jitter == 0` and the Gram
/// matrix is numerically rank deficient; callers either retry with jitter
/// or fall back to [`min_norm_solution`].
pub fn solve_least_squares(p: &LeastSquaresProblem) -> Result<DVector<f64>> {
    let x = &p.regressors;
    if x.nrows() != p.targets.len() {
        return Err(OpeError::InvalidData("targets and regressors disagree in rows".into()));
    }
    if x.iter().chain(p.targets.iter()).any(|v| !v.is_finite()) {
        return Err(OpeError::InvalidData("non-finite least-squares input".into()));
    }
    let cols = x.ncols();
    if cols == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut gram = x.transpose() * x;
    let rhs = x.transpose() * &p.targets;
    let scale = gram.diagonal().iter().fold(0.0_f64, |m, v| m.max(*v));
    for i in 0..cols {
        gram[(i, i)] += p.jitter;
    }
    let chol = match gram.clone().cholesky() {
        Some(c) => c,
        None => return Err(OpeError::SingularDesign),
    };
    if p.jitter == 0.0 {
        let l = chol.l_dirty();
        let min_pivot = (0..cols).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if scale == 0.0 || min_pivot < PIVOT_TOL * scale {
            return Err(OpeError::SingularDesign);
        }
    }
    Ok(chol.solve(&rhs))
}

/// Minimum-norm least-squares solution through the SVD pseudo-inverse.
pub fn min_norm_solution(regressors: &DMatrix<f64>, targets: &DVector<f64>) -> DVector<f64> {
    let svd = regressors.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let eps = smax * 1e-12 * regressors.nrows().max(regressors.ncols()) as f64;
    svd.solve(targets, eps).unwrap_or_else(|_| DVector::zeros(regressors.ncols()))
}

/// Outcome of [`fit_quadratic`].
#[derive(Debug, Clone)]
pub struct QuadraticFit {
    pub coefficients: DVector<f64>,
    /// Mean squared residual at the solution.
    pub objective: f64,
    pub singular: bool,
}

/// Least squares with the pseudo-inverse fallback used by every estimator.
pub fn fit_quadratic(regressors: DMatrix<f64>, targets: DVector<f64>) -> QuadraticFit {
    let problem = LeastSquaresProblem::new(regressors, targets);
    let (coefficients, singular) = match solve_least_squares(&problem) {
        Ok(z) => (z, false),
        Err(_) => (min_norm_solution(&problem.regressors, &problem.targets), true),
    };
    let objective = problem.objective(&coefficients);
    QuadraticFit { coefficients, objective, singular }
}
