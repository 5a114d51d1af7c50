//! Quadratic-bowl learner with controllable update magnitude.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{GradientSample, Learner, UpdateStats};
use crate::error::{GalaError, Result};

/// Loss `0.5 ||x - c||^2` observed through additive Gaussian noise; the
/// direction is the negated gradient, optionally capped at norm `cap`.
#[derive(Debug, Clone)]
pub struct SyntheticLearner {
    center: Vec<f64>,
    noise: f64,
    cap: Option<f64>,
    rng: ChaCha8Rng,
}

impl SyntheticLearner {
    pub fn new(center: Vec<f64>, noise: f64, cap: Option<f64>, seed: u64) -> Result<Self> {
        if center.is_empty() {
            return Err(GalaError::invalid("synthetic learner needs d >= 1"));
        }
        if !(noise >= 0.0) {
            return Err(GalaError::invalid("noise must be nonnegative"));
        }
        if let Some(c) = cap {
            if !(c > 0.0) {
                return Err(GalaError::invalid("norm cap must be positive"));
            }
        }
        Ok(SyntheticLearner {
            center,
            noise,
            cap,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl Learner for SyntheticLearner {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn gradient(&mut self, params: &[f64]) -> Result<GradientSample> {
        if params.len() != self.center.len() {
            return Err(GalaError::invalid("parameter length does not match the bowl"));
        }
        let grad: Vec<f64> = params
            .iter()
            .zip(&self.center)
            .map(|(x, c)| {
                let eps = if self.noise > 0.0 {
                    self.noise * self.rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                x - c - eps
            })
            .collect();
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        Ok(GradientSample {
            grad,
            stats: UpdateStats {
                grad_norm,
                ..UpdateStats::default()
            },
        })
    }

    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        let mut u: Vec<f64> = grad.iter().map(|g| -g).collect();
        if let Some(cap) = self.cap {
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > cap {
                let s = cap / norm;
                u.iter_mut().for_each(|v| *v *= s);
            }
        }
        u
    }
}

/// Produces no updates; drives pure gossip runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdleLearner {
    pub dim: usize,
}

impl Learner for IdleLearner {
    fn dim(&self) -> usize {
        self.dim
    }

    fn gradient(&mut self, _params: &[f64]) -> Result<GradientSample> {
        Ok(GradientSample {
            grad: vec![0.0; self.dim],
            stats: UpdateStats::default(),
        })
    }

    fn direction(&mut self, _grad: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}
