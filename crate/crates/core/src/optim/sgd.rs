//! Minibatch stochastic gradient descent with a fixed step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

/// A loss that decomposes as a mean over samples.
pub trait SgdObjective {
    fn n_samples(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Loss of sample `i` at `params`; adds its gradient into `grad`.
    fn sample_loss_grad(&self, i: usize, params: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub step: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { step: 0.01, epochs: 200, batch: 64, seed: 0 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) || self.batch == 0 {
            return Err(OpeError::InvalidConfig("SGD step and batch must be positive".into()));
        }
        Ok(())
    }
}

/// Runs `cfg.epochs` passes over a seeded shuffle of the samples and returns
/// the final iterate.
pub fn sgd_minimize<O: SgdObjective + ?Sized>(obj: &O, init: &[f64], cfg: &SgdConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let p = obj.n_params();
    if init.len() != p {
        return Err(OpeError::InvalidConfig(format!("initial point has {} entries, expected {p}", init.len())));
    }
    let mut params = init.to_vec();
    let n = obj.n_samples();
    if n == 0 {
        return Ok(params);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; p];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            grad.fill(0.0);
            let mut loss = 0.0;
            for &i in batch {
                loss += obj.sample_loss_grad(i, &params, &mut grad);
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(OpeError::SolverDiverged(format!("non-finite SGD loss in epoch {epoch}")));
            }
            let scale = cfg.step / batch.len() as f64;
            for (x, g) in params.iter_mut().zip(&grad) {
                *x -= scale * g;
            }
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `(x·a_i − b_i)²` over a small fixed sample.
    struct Quadratic {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl SgdObjective for Quadratic {
        fn n_samples(&self) -> usize {
            self.a.len()
        }
        fn n_params(&self) -> usize {
            1
        }
        fn sample_loss_grad(&self, i: usize, p: &[f64], g: &mut [f64]) -> f64 {
            let r = p[0] * self.a[i] - self.b[i];
            g[0] += 2.0 * r * self.a[i];
            r * r
        }
    }

    struct Flat;

    impl SgdObjective for Flat {
        fn n_samples(&self) -> usize {
            10
        }
        fn n_params(&self) -> usize {
            2
        }
        fn sample_loss_grad(&self, _: usize, _: &[f64], _: &mut [f64]) -> f64 {
            1.0
        }
    }

    fn fixture() -> Quadratic {
        let a: Vec<f64> = (0..50).map(|i| 0.5 + (i % 7) as f64 / 7.0).collect();
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| 1.5 * x + ((i * 37 % 11) as f64 - 5.0) / 20.0).collect();
        Quadratic { a, b }
    }

    #[test]
    fn flat_objective_keeps_init() {
        let out = sgd_minimize(&Flat, &[0.3, -0.7], &SgdConfig::default()).unwrap();
        assert_eq!(out, vec![0.3, -0.7]);
    }

    #[test]
    fn quadratic_reaches_closed_form() {
        let q = fixture();
        let sab: f64 = q.a.iter().zip(&q.b).map(|(a, b)| a * b).sum();
        let saa: f64 = q.a.iter().map(|a| a * a).sum();
        let cfg = SgdConfig { step: 0.05, epochs: 500, batch: 8, seed: 3 };
        let out = sgd_minimize(&q, &[0.0], &cfg).unwrap();
        assert!((out[0] - sab / saa).abs() < 1e-2, "{} vs {}", out[0], sab / saa);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let q = fixture();
        let cfg = SgdConfig { step: 0.05, epochs: 20, batch: 8, seed: 11 };
        let a = sgd_minimize(&q, &[0.0], &cfg).unwrap();
        let b = sgd_minimize(&q, &[0.0], &cfg).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn divergence_is_reported() {
        let q = fixture();
        let cfg = SgdConfig { step: 50.0, epochs: 200, batch: 50, seed: 0 };
        assert_eq!(sgd_minimize(&q, &[0.0], &cfg).unwrap_err().name(), "SolverDiverged");
    }
}
