//! Local training dynamics plugged into the gossip engine.

pub mod a2c;
pub mod env;
pub mod eval;
pub mod model;
pub mod optim;
pub mod synthetic;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Episode {
    pub ret: f64,
    pub len: usize,
}

/// Diagnostics attached to one gradient evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub env_steps: u64,
    pub episodes: Vec<Episode>,
    pub entropy: f64,
    pub value_loss: f64,
    pub policy_loss: f64,
    /// Norm of the raw gradient before clipping.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub grad: Vec<f64>,
    pub stats: UpdateStats,
}

/// A learner evaluates loss gradients at given parameters and turns a
/// (possibly averaged) gradient into an update direction `u`; the engine
/// applies `x += alpha * u`.
pub trait Learner: Send {
    fn dim(&self) -> usize;

    fn gradient(&mut self, params: &[f64]) -> Result<GradientSample>;

    fn direction(&mut self, grad: &[f64]) -> Vec<f64>;
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn gradient(&mut self, params: &[f64]) -> Result<GradientSample> {
        (**self).gradient(params)
    }

    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        (**self).direction(grad)
    }
}
