//! Greedy evaluation, exact optima and gradient diagnostics.

use nalgebra::DMatrix;

use super::env::EnvSpec;
use super::model::PolicyValueModel;
use crate::error::{GalaError, Result};

pub const VALUE_ITERATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    pub stderr: f64,
    pub returns: Vec<f64>,
}

/// Discounted returns of `argmax_a pi(a|s)` from the start state.
pub fn evaluate_policy(
    model: &PolicyValueModel,
    params: &[f64],
    env: &EnvSpec,
    episodes: usize,
    gamma: f64,
    max_steps: usize,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(GalaError::invalid("evaluation needs at least one episode"));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.start();
        let mut ret = 0.0;
        let mut discount = 1.0;
        for _ in 0..max_steps {
            let a = model.greedy_action(params, s);
            let (next, r, done) = env.transition(s, a);
            ret += discount * r;
            discount *= gamma;
            s = next;
            if done {
                break;
            }
        }
        returns.push(ret);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let stderr = if returns.len() > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(EvalResult {
        mean,
        stderr,
        returns,
    })
}

/// Optimal state values by value iteration (terminal states have value 0).
pub fn value_iteration(env: &EnvSpec, gamma: f64, tol: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(GalaError::invalid("value iteration needs gamma in [0, 1)"));
    }
    let ns = env.num_states();
    let mut v = vec![0.0; ns];
    for _ in 0..1_000_000 {
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            if env.is_terminal(s) {
                continue;
            }
            let best = (0..env.num_actions())
                .map(|a| {
                    let (next, r, done) = env.transition(s, a);
                    r + if done { 0.0 } else { gamma * v[next] }
                })
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta <= tol {
            return Ok(v);
        }
    }
    Err(GalaError::Convergence("value iteration did not reach tolerance".into()))
}

/// Pairwise cosine similarity; a zero gradient has similarity 0 with every
/// other gradient and 1 with itself.
pub fn gradient_correlation(grads: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = grads.len();
    if let Some(d) = grads.first().map(|g| g.len()) {
        if grads.iter().any(|g| g.len() != d) {
            return Err(GalaError::invalid("gradients differ in dimension"));
        }
    }
    let norms: Vec<f64> = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut c = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Mean of the off-diagonal entries (0 for a single agent).
pub fn mean_off_diagonal(c: &DMatrix<f64>) -> f64 {
    let n = c.nrows();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = c.iter().sum::<f64>() - c.diagonal().sum();
    total / (n * (n - 1)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::model::ModelSpec;

    #[test]
    fn chain_optimum() {
        let env = EnvSpec::Chain { length: 5 };
        let v = value_iteration(&env, 0.9, VALUE_ITERATION_TOL).unwrap();
        assert!((v[0] - 0.9f64.powi(3)).abs() < 1e-12);
        let model = PolicyValueModel::new(ModelSpec::Tabular, 5, 2).unwrap();
        let mut x = model.init(0);
        for s in 0..5 {
            x[s * 2 + 1] = 1.0;
        }
        let r = evaluate_policy(&model, &x, &env, 3, 0.9, 50).unwrap();
        assert!((r.mean - v[0]).abs() < 1e-9);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn correlation_examples() {
        let c = gradient_correlation(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!((c[(0, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(c[(0, 2)], 0.0);
        assert!((c[(0, 3)] + 1.0).abs() < 1e-15);
        assert_eq!(c[(4, 4)], 1.0);
        assert_eq!(c[(4, 0)], 0.0);
        assert_eq!(c, c.transpose());
    }
}
