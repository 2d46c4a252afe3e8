//! Gaussian radial-basis features on a regular grid of centres.

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

/// Centres sit at `i / (grid − 1)` along each axis of the unit box that the
/// state box `[lows, highs]` is mapped onto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfFeaturizer {
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
    pub grid: usize,
    /// In normalised units.
    pub bandwidth: f64,
}

impl RbfFeaturizer {
    pub fn new(lows: Vec<f64>, highs: Vec<f64>, grid: usize, bandwidth: f64) -> Result<Self> {
        if lows.len() != highs.len() || lows.is_empty() || lows.iter().zip(&highs).any(|(l, h)| !(l < h)) {
            return Err(OpeError::InvalidConfig("RBF bounds must satisfy low < high per axis".into()));
        }
        if grid < 2 || !(bandwidth > 0.0) {
            return Err(OpeError::InvalidConfig("RBF grid needs at least 2 points and positive bandwidth".into()));
        }
        Ok(RbfFeaturizer { lows, highs, grid, bandwidth })
    }

    /// The 20×20, bandwidth-0.1 featuriser for Mountain Car's
    /// position/velocity box.
    pub fn mountain_car() -> Self {
        use crate::envs::mountain_car::{MAX_POSITION, MAX_SPEED, MIN_POSITION};
        RbfFeaturizer::new(vec![MIN_POSITION, -MAX_SPEED], vec![MAX_POSITION, MAX_SPEED], 20, 0.1)
            .expect("fixed parameters are valid")
    }

    pub fn dim(&self) -> usize {
        self.grid.pow(self.lows.len() as u32)
    }

    /// Centre `j` in normalised coordinates (last axis varies fastest).
    pub fn center(&self, j: usize) -> Vec<f64> {
        let d = self.lows.len();
        let mut out = vec![0.0; d];
        let mut rem = j;
        for axis in (0..d).rev() {
            out[axis] = (rem % self.grid) as f64 / (self.grid - 1) as f64;
            rem /= self.grid;
        }
        out
    }

    fn normalized(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(self.lows.iter().zip(&self.highs))
            .map(|(x, (l, h))| (x - l) / (h - l))
            .collect()
    }

    fn eval(&self, u: &[f64]) -> Vec<f64> {
        let denom = 2.0 * self.bandwidth * self.bandwidth;
        // separable: exp(−Σ_k Δ_k²/2b²) = Π_k exp(−Δ_k²/2b²)
        let axes: Vec<Vec<f64>> = u
            .iter()
            .map(|x| {
                (0..self.grid)
                    .map(|i| {
                        let c = i as f64 / (self.grid - 1) as f64;
                        (-(x - c) * (x - c) / denom).exp()
                    })
                    .collect()
            })
            .collect();
        (0..self.dim())
            .map(|j| {
                let mut rem = j;
                let mut v = 1.0;
                for axis in (0..u.len()).rev() {
                    v *= axes[axis][rem % self.grid];
                    rem /= self.grid;
                }
                v
            })
            .collect()
    }

    /// Feature vector of an in-bounds state.
    pub fn featurize(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.lows.len() {
            return Err(OpeError::OutOfBounds(format!(
                "state has {} coordinates, featuriser expects {}",
                state.len(),
                self.lows.len()
            )));
        }
        for (k, x) in state.iter().enumerate() {
            if !(self.lows[k]..=self.highs[k]).contains(x) {
                return Err(OpeError::OutOfBounds(format!(
                    "coordinate {k} = {x} outside [{}, {}]",
                    self.lows[k], self.highs[k]
                )));
            }
        }
        Ok(self.eval(&self.normalized(state)))
    }

    /// Like [`featurize`](Self::featurize) but clamps into the box first.
    pub fn featurize_clamped(&self, state: &[f64]) -> Vec<f64> {
        let mut u = self.normalized(state);
        u.resize(self.lows.len(), 0.5);
        for x in u.iter_mut() {
            *x = if x.is_finite() { x.clamp(0.0, 1.0) } else { 0.5 };
        }
        self.eval(&u)
    }
}
