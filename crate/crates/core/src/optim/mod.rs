//! Solver primitives shared by the estimators and model-fitting routines.
//!
//! All solvers are deterministic given their inputs; SGD draws randomness
//! only from its explicit seed.

pub mod concave;
pub mod least_squares;
pub mod logistic;
pub mod sgd;

pub use concave::{maximize_concave, ConcaveObjective, EmpiricalLikelihood, NewtonConfig, NewtonOutcome};
pub use least_squares::{fit_quadratic, solve_least_squares, LeastSquaresProblem, QuadraticFit};
pub use logistic::{logistic_fit, softmax_nll_grad, LogisticConfig, LogisticModel, Penalty};
pub use sgd::{sgd_minimize, SgdConfig, SgdObjective};
