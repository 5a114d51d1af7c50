//! Exact gradient averaging across learners (topology-free baseline).

use super::sim::{IterationView, StopRule, UpdateRecord};
use super::AgentState;
use crate::error::{GalaError, Result};
use crate::learners::{Learner, UpdateStats};

/// Largest tolerated spread between replicas before the run is rejected.
pub const DIVERGENCE_TOL: f64 = 1e-9;

/// Averages the learners' gradients at the shared parameters and applies
/// each learner's direction for that average to its own replica.
/// Returns per-learner statistics and the raw gradients.
pub fn allreduce_step(
    agents: &mut [AgentState],
    learners: &mut [Box<dyn Learner>],
    alpha: f64,
) -> Result<(Vec<UpdateStats>, Vec<Vec<f64>>, f64)> {
    let n = agents.len();
    if n == 0 || learners.len() != n {
        return Err(GalaError::invalid("allreduce needs one learner per agent"));
    }
    check_replicas(agents)?;
    let d = agents[0].params.len();
    let mut sum = vec![0.0; d];
    let mut stats = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    for (agent, learner) in agents.iter().zip(learners.iter_mut()) {
        let sample = learner.gradient(&agent.params)?;
        for (s, g) in sum.iter_mut().zip(&sample.grad) {
            *s += g;
        }
        grads.push(sample.grad);
        stats.push(sample.stats);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut norm = 0.0;
    for (agent, learner) in agents.iter_mut().zip(learners.iter_mut()) {
        let u = learner.direction(&mean);
        norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        agent.apply_update(&u, alpha)?;
        agent.local_iter += 1;
    }
    check_replicas(agents)?;
    Ok((stats, grads, norm))
}

fn check_replicas(agents: &[AgentState]) -> Result<()> {
    let first = &agents[0].params;
    for a in &agents[1..] {
        let spread = a
            .params
            .iter()
            .zip(first)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if spread > DIVERGENCE_TOL {
            return Err(GalaError::Consistency(format!(
                "replica {} diverged from replica 0 by {spread:e}",
                a.id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllReduceOutput {
    pub final_params: Vec<f64>,
    pub iterations: u64,
    pub env_steps: u64,
    pub updates: Vec<UpdateRecord>,
    /// Parameters after every update (only when requested).
    pub trajectory: Vec<Vec<f64>>,
}

pub fn run_allreduce(
    learners: &mut [Box<dyn Learner>],
    init: &[f64],
    alpha: f64,
    stop: StopRule,
    record_trajectory: bool,
    mut hook: Option<&mut super::sim::Hook<'_>>,
) -> Result<AllReduceOutput> {
    let n = learners.len();
    let mut agents: Vec<AgentState> = (0..n).map(|i| AgentState::new(i, init.to_vec(), vec![], i as u64)).collect();
    let mut out = AllReduceOutput {
        final_params: Vec::new(),
        iterations: 0,
        env_steps: 0,
        updates: Vec::new(),
        trajectory: Vec::new(),
    };
    let mut last: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut k = 0u64;
    loop {
        let done = match stop {
            StopRule::Iterations(total) => k >= total,
            StopRule::EnvSteps(total) => out.env_steps >= total,
        };
        if done {
            break;
        }
        let (stats, grads, norm) = allreduce_step(&mut agents, learners, alpha)?;
        if stats.iter().all(|s| s.env_steps == 0) && matches!(stop, StopRule::EnvSteps(_)) {
            return Err(GalaError::invalid("env-step budget with learners that take no env steps"));
        }
        for (i, (s, g)) in stats.into_iter().zip(grads).enumerate() {
            out.env_steps += s.env_steps;
            out.updates.push(UpdateRecord {
                k,
                global_step: out.env_steps,
                agent: i,
                stats: s,
                update_norm: norm,
            });
            last[i] = Some(g);
        }
        if record_trajectory {
            out.trajectory.push(agents[0].params.clone());
        }
        k += 1;
        if let Some(h) = hook.as_deref_mut() {
            h(&IterationView {
                k,
                env_steps: out.env_steps,
                agents: &agents,
                last_grads: &last,
            })?;
        }
    }
    out.iterations = k;
    out.final_params = agents.swap_remove(0).params;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::GradientSample;

    struct Fixed(Vec<f64>);

    impl Learner for Fixed {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn gradient(&mut self, _: &[f64]) -> Result<GradientSample> {
            Ok(GradientSample {
                grad: self.0.clone(),
                stats: UpdateStats::default(),
            })
        }
        fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
            grad.iter().map(|g| -g).collect()
        }
    }

    #[test]
    fn opposite_gradients_cancel() {
        let mut learners: Vec<Box<dyn Learner>> = vec![Box::new(Fixed(vec![1.0, -2.0])), Box::new(Fixed(vec![-1.0, 2.0]))];
        let out = run_allreduce(&mut learners, &[3.0, 4.0], 0.5, StopRule::Iterations(3), false, None).unwrap();
        assert_eq!(out.final_params, vec![3.0, 4.0]);
    }

    #[test]
    fn single_learner_is_plain_descent() {
        let mut learners: Vec<Box<dyn Learner>> = vec![Box::new(Fixed(vec![1.0]))];
        let out = run_allreduce(&mut learners, &[0.0], 0.25, StopRule::Iterations(4), true, None).unwrap();
        assert_eq!(out.final_params, vec![-1.0]);
        assert_eq!(out.trajectory.len(), 4);
    }

    #[test]
    fn diverged_replicas_rejected() {
        let mut agents = vec![AgentState::new(0, vec![0.0], vec![], 0), AgentState::new(1, vec![1e-6], vec![], 0)];
        let mut learners: Vec<Box<dyn Learner>> = vec![Box::new(Fixed(vec![0.0])), Box::new(Fixed(vec![0.0]))];
        assert!(matches!(allreduce_step(&mut agents, &mut learners, 0.1), Err(GalaError::Consistency(_))));
    }
}
