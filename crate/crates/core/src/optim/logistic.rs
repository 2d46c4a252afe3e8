//! Penalised multinomial logistic regression.
//!
//! Minimises `E_n[−log p(y|x)] + (strength/n)·P(θ)` where `P` is
//! `½‖θ‖²` (l2) or `‖θ‖₁` (l1) over all weights and biases. The smooth part
//! is handled by accelerated gradient steps with adaptive restart; the l1
//! term by soft-thresholding.

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub penalty: Penalty,
    pub strength: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop when no parameter moves by more than this in one step.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    2000
}

fn default_tol() -> f64 {
    1e-8
}

impl LogisticConfig {
    pub fn new(penalty: Penalty, strength: f64) -> Self {
        LogisticConfig { penalty, strength, max_iter: default_max_iter(), tol: default_tol() }
    }
}

/// Softmax classifier `p(c|x) ∝ exp(w_c·x + b_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub n_classes: usize,
    pub dim: usize,
    /// Row-major `n_classes × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        LogisticModel { n_classes, dim, weights: vec![0.0; n_classes * dim], bias: vec![0.0; n_classes] }
    }

    fn from_params(n_classes: usize, dim: usize, theta: &[f64]) -> Self {
        LogisticModel {
            n_classes,
            dim,
            weights: theta[..n_classes * dim].to_vec(),
            bias: theta[n_classes * dim..].to_vec(),
        }
    }

    /// Class probabilities; features beyond `dim` are ignored and missing
    /// ones read as 0.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        self.proba_into(x, &mut out);
        out
    }

    fn proba_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        softmax_in_place(out);
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean unpenalised negative log-likelihood of a softmax model and its
/// gradient. `theta` holds the `n_classes × d` weights row by row followed by
/// the `n_classes` intercepts.
pub fn softmax_nll_grad(
    features: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    theta: &[f64],
    grad: &mut [f64],
) -> f64 {
    let d = features.first().map_or(0, Vec::len);
    Problem { x: features, y: labels, k: n_classes, d }.nll_grad(theta, grad)
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    k: usize,
    d: usize,
}

impl Problem<'_> {
    /// Mean negative log-likelihood and its gradient.
    fn nll_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let model = LogisticModel::from_params(self.k, self.d, theta);
        let mut p = vec![0.0; self.k];
        let mut loss = 0.0;
        for (x, &y) in self.x.iter().zip(self.y) {
            model.proba_into(x, &mut p);
            loss -= p[y].max(1e-300).ln();
            for c in 0..self.k {
                let r = p[c] - if c == y { 1.0 } else { 0.0 };
                let row = &mut grad[c * self.d..(c + 1) * self.d];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += r * xi;
                }
                grad[self.k * self.d + c] += r;
            }
        }
        let n = self.x.len() as f64;
        for g in grad.iter_mut() {
            *g /= n;
        }
        loss / n
    }
}

/// Fits a `n_classes`-way softmax model to `features`/`labels`.
///
/// Fails when fewer than two classes are present or the iterates become
/// non-finite. Reaching `max_iter` returns the current iterate.
pub fn logistic_fit(
    features: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    cfg: &LogisticConfig,
) -> Result<LogisticModel> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(OpeError::EmptyInput);
    }
    let d = features[0].len();
    if features.iter().any(|x| x.len() != d) {
        return Err(OpeError::InvalidData("ragged feature matrix".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(OpeError::InvalidData(format!("label {bad} outside {n_classes} classes")));
    }
    let mut seen = vec![false; n_classes];
    labels.iter().for_each(|&y| seen[y] = true);
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(OpeError::InvalidData("logistic regression needs at least two classes".into()));
    }
    if !(cfg.strength >= 0.0) {
        return Err(OpeError::InvalidConfig("penalty strength must be nonnegative".into()));
    }
    let n = features.len() as f64;
    let lambda = cfg.strength / n;
    let prob = Problem { x: features, y: labels, k: n_classes, d };
    let p = n_classes * (d + 1);
    let mean_sq = features.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>() + 1.0).sum::<f64>() / n;
    let lipschitz = 0.5 * mean_sq + if cfg.penalty == Penalty::L2 { lambda } else { 0.0 };
    let step = 1.0 / lipschitz;

    let total = |theta: &[f64], grad: &mut [f64]| -> f64 {
        let mut f = prob.nll_grad(theta, grad);
        if cfg.penalty == Penalty::L2 {
            for (g, t) in grad.iter_mut().zip(theta) {
                *g += lambda * t;
            }
            f += 0.5 * lambda * theta.iter().map(|t| t * t).sum::<f64>();
        }
        f
    };
    let prox = |v: &mut [f64]| {
        if cfg.penalty == Penalty::L1 {
            let thr = step * lambda;
            for x in v.iter_mut() {
                *x = x.signum() * (x.abs() - thr).max(0.0);
            }
        }
    };

    let mut theta = vec![0.0; p];
    let mut momentum_point = theta.clone();
    let mut grad = vec![0.0; p];
    let mut next = vec![0.0; p];
    let mut t_k = 1.0_f64;
    for _ in 0..cfg.max_iter {
        total(&momentum_point, &mut grad);
        for i in 0..p {
            next[i] = momentum_point[i] - step * grad[i];
        }
        prox(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(OpeError::SolverDiverged("non-finite logistic parameters".into()));
        }
        let mut delta = 0.0_f64;
        let mut restart = 0.0;
        for i in 0..p {
            delta = delta.max((next[i] - theta[i]).abs());
            restart += (momentum_point[i] - next[i]) * (next[i] - theta[i]);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        let beta = if restart > 0.0 { 0.0 } else { (t_k - 1.0) / t_next };
        t_k = if restart > 0.0 { 1.0 } else { t_next };
        for i in 0..p {
            momentum_point[i] = next[i] + beta * (next[i] - theta[i]);
        }
        std::mem::swap(&mut theta, &mut next);
        if delta < cfg.tol {
            break;
        }
    }
    Ok(LogisticModel::from_params(n_classes, d, &theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<Vec<f64>>, Vec<usize>) {
        let x = vec![vec![-2.0, 0.1], vec![-1.5, -0.3], vec![-1.0, 0.4], vec![1.0, 0.2], vec![1.6, -0.1], vec![2.2, 0.3]];
        let y = vec![0, 0, 0, 1, 1, 1];
        (x, y)
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable();
        for pen in [Penalty::L1, Penalty::L2] {
            let m = logistic_fit(&x, &y, 2, &LogisticConfig::new(pen, 1.0)).unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                assert_eq!(m.predict(xi), *yi);
                let p = m.predict_proba(xi);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn huge_penalty_gives_uniform() {
        let (x, y) = separable();
        for pen in [Penalty::L1, Penalty::L2] {
            let m = logistic_fit(&x, &y, 3, &LogisticConfig::new(pen, 1e9)).unwrap();
            assert!(m.weights.iter().chain(&m.bias).all(|w| w.abs() < 1e-6));
            for p in m.predict_proba(&x[0]) {
                assert!((p - 1.0 / 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(logistic_fit(&x, &[1, 1], 2, &LogisticConfig::new(Penalty::L2, 1.0)).is_err());
    }
}
