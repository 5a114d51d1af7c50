use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    #[default]
    Sgd,
    RmsProp {
        #[serde(default = "default_decay")]
        decay: f64,
        #[serde(default = "default_eps")]
        epsilon: f64,
    },
}

fn default_decay() -> f64 {
    0.99
}

fn default_eps() -> f64 {
    0.01
}

/// Turns a loss gradient into a descent direction `u`; the
/// caller applies `x += alpha * u`.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    RmsProp { decay: f64, epsilon: f64, sq: Vec<f64> },
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, dim: usize) -> Self {
        match spec {
            OptimizerSpec::Sgd => Optimizer::Sgd,
            OptimizerSpec::RmsProp { decay, epsilon } => Optimizer::RmsProp {
                decay,
                epsilon,
                sq: vec![0.0; dim],
            },
        }
    }

    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        match self {
            Optimizer::Sgd => grad.iter().map(|g| -g).collect(),
            Optimizer::RmsProp { decay, epsilon, sq } => grad
                .iter()
                .zip(sq.iter_mut())
                .map(|(&g, v)| {
                    *v = *decay * *v + (1.0 - *decay) * g * g;
                    -g / (*v + *epsilon).sqrt()
                })
                .collect(),
        }
    }
}

/// `g * min(1, cap / ||g||)`.
pub fn clip_global_norm(g: &[f64], cap: f64) -> Vec<f64> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= cap || norm == 0.0 {
        return g.to_vec();
    }
    let scale = cap / norm;
    g.iter().map(|v| v * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_examples() {
        let g = clip_global_norm(&[2.0, 0.0], 0.5);
        assert_eq!(g, vec![0.5, 0.0]);
        assert_eq!(clip_global_norm(&[0.1, 0.2], 0.5), vec![0.1, 0.2]);
        assert_eq!(clip_global_norm(&[0.0, 0.0], 0.5), vec![0.0, 0.0]);
    }

    #[test]
    fn sgd_descends() {
        let mut o = Optimizer::new(OptimizerSpec::Sgd, 2);
        assert_eq!(o.direction(&[1.0, -2.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn rmsprop_first_step() {
        let mut o = Optimizer::new(OptimizerSpec::RmsProp { decay: 0.99, epsilon: 0.01 }, 1);
        let u = o.direction(&[1.0]);
        assert!((u[0] + 1.0 / (0.01f64 + 0.01).sqrt()).abs() < 1e-12);
    }
}
