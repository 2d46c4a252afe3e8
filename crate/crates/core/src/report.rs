use serde::{Deserialize, Serialize};

/// Which estimator produced a set of control-variate coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRole {
    Reg,
    Emp,
    Snreg,
    Fixed,
}

/// Control-variate coefficients, one block per free time segment.
///
/// Block `b` holds `[ζ_{b,0}, ζ_{b,1}, …]`: the intercept followed by one
/// coefficient per Q-model. Time step `t` uses block `min(t, k)`, so there
/// are `k + 1` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVariateParams {
    pub role: CvRole,
    pub blocks: Vec<Vec<f64>>,
}

impl ControlVariateParams {
    pub fn new(role: CvRole, blocks: Vec<Vec<f64>>) -> Self {
        ControlVariateParams { role, blocks }
    }

    /// The same coefficients for every time step.
    pub fn shared(coefs: Vec<f64>) -> Self {
        ControlVariateParams { role: CvRole::Fixed, blocks: vec![coefs] }
    }

    /// `k + 1` zero blocks of width `basis`.
    pub fn zeros(k: usize, basis: usize) -> Self {
        ControlVariateParams { role: CvRole::Fixed, blocks: vec![vec![0.0; basis]; k + 1] }
    }

    pub fn k(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn basis_len(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn block_of(&self, t: usize) -> usize {
        t.min(self.k())
    }

    /// Flattened block-major vector, matching the design-matrix columns.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn from_flat(role: CvRole, flat: &[f64], basis: usize) -> Self {
        ControlVariateParams { role, blocks: flat.chunks(basis).map(<[f64]>::to_vec).collect() }
    }
}

/// A point estimate with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub method: String,
    pub estimate: f64,
    pub fitted_params: Option<ControlVariateParams>,
    pub objective_value: Option<f64>,
    pub solver_iters: Option<usize>,
    /// `|estimate| <= Σ_t γ^t R_max`, recomputed from the estimate.
    pub within_bound: bool,
    /// Largest cumulative importance ratio in the data.
    pub max_weight: f64,
    /// The least-squares design was rank deficient and a minimum-norm
    /// solution was used.
    #[serde(default)]
    pub singular_design: bool,
    /// Some `1 + g` value sat at the feasibility floor at the solution.
    #[serde(default)]
    pub constraint_binding: bool,
}

impl EstimatorReport {
    pub fn new(method: &str, estimate: f64, return_bound: f64, max_weight: f64) -> Self {
        EstimatorReport {
            method: method.to_string(),
            estimate,
            fitted_params: None,
            objective_value: None,
            solver_iters: None,
            within_bound: estimate.abs() <= return_bound * (1.0 + 1e-12),
            max_weight,
            singular_design: false,
            constraint_binding: false,
        }
    }
}
