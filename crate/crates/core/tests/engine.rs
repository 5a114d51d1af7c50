use std::time::Duration;

use gala_core::engine::allreduce::run_allreduce;
use gala_core::engine::parallel::{run_parallel, ParallelSettings};
use gala_core::engine::sim::{simulate, SimSettings, StopRule};
use gala_core::engine::{ActivationSpec, DelayModel, DelaySpec, Tau};
use gala_core::learners::synthetic::{IdleLearner, SyntheticLearner};
use gala_core::learners::Learner;
use gala_core::topology::{build_full, build_ring, TopologySpec};
use gala_core::GalaError;

fn settings(topo: TopologySpec, tau: Tau, delay: DelaySpec, iters: u64) -> SimSettings {
    SimSettings {
        topology: topo,
        tau,
        delay: DelayModel::new(delay, tau).unwrap(),
        activation: ActivationSpec::RoundRobin,
        alpha: 0.1,
        stop: StopRule::Iterations(iters),
        seed: 11,
        record_trace: false,
        log_protocol: true,
        max_iterations: iters,
    }
}

fn idle(n: usize, d: usize) -> Vec<Box<dyn Learner>> {
    (0..n).map(|_| Box::new(IdleLearner { dim: d }) as Box<dyn Learner>).collect()
}

fn bowls(n: usize, d: usize, cap: Option<f64>) -> Vec<Box<dyn Learner>> {
    (0..n)
        .map(|i| {
            let c = (0..d).map(|j| ((i * 7 + j * 3) % 5) as f64 - 2.0).collect();
            Box::new(SyntheticLearner::new(c, 0.1, cap, 40 + i as u64).unwrap()) as Box<dyn Learner>
        })
        .collect()
}

fn parallel(topo: TopologySpec, tau: Tau, steps: u64) -> ParallelSettings {
    ParallelSettings {
        topology: topo,
        tau,
        alpha: 0.1,
        steps_per_agent: steps,
        observe_stride: 10,
        timeout: Duration::from_secs(10),
    }
}

#[test]
fn sink_agent_pulls_everyone_to_its_value() {
    let topo = TopologySpec::fixed(2, vec![(0, 1)]).unwrap();
    let mut s = settings(topo, Tau::Infinite, DelaySpec::Constant { delay: 0 }, 200);
    s.alpha = 0.0;
    let out = simulate(&s, &mut idle(2, 1), &[vec![5.0], vec![1.0]], None).unwrap();
    assert_eq!(out.final_params[0], vec![5.0]);
    assert!((out.final_params[1][0] - 5.0).abs() < 1e-12);
}

#[test]
fn identical_runs_give_identical_traces() {
    let s = SimSettings {
        record_trace: true,
        activation: ActivationSpec::RandomSubset { p: 0.6 },
        ..settings(build_ring(5).unwrap(), Tau::Finite(2), DelaySpec::Uniform { max: None }, 150)
    };
    let init = vec![vec![0.3, -0.2]; 5];
    let a = simulate(&s, &mut bowls(5, 2, None), &init, None).unwrap();
    let b = simulate(&s, &mut bowls(5, 2, None), &init, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_agent_parallel_equals_simulated() {
    let topo = build_ring(1).unwrap();
    let sim = simulate(
        &settings(topo.clone(), Tau::Finite(0), DelaySpec::Constant { delay: 0 }, 50),
        &mut bowls(1, 3, None),
        &[vec![1.0, 0.0, -1.0]],
        None,
    )
    .unwrap();
    let par = run_parallel(&parallel(topo, Tau::Finite(0), 50), &mut bowls(1, 3, None), &[vec![1.0, 0.0, -1.0]]).unwrap();
    assert_eq!(sim.final_params, par.final_params);
}

#[test]
fn parallel_gossip_reaches_initial_mean() {
    let init: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, -(i as f64) * 0.5]).collect();
    let mean = [1.5, -0.75];
    let out = run_parallel(&parallel(build_ring(4).unwrap(), Tau::Finite(0), 400), &mut idle(4, 2), &init).unwrap();
    for x in &out.final_params {
        for (a, b) in x.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn parallel_gossip_with_slack_reaches_consensus() {
    let init: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
    let out = run_parallel(&parallel(build_ring(4).unwrap(), Tau::Finite(2), 400), &mut idle(4, 1), &init).unwrap();
    let (lo, hi) = out.final_params.iter().fold((f64::MAX, f64::MIN), |(l, h), x| (l.min(x[0]), h.max(x[0])));
    assert!(hi - lo < 1e-6);
    assert!(lo >= 0.0 && hi <= 3.0);
}

#[test]
fn parallel_guard_bounds_staleness() {
    for t in 0..3 {
        let out = run_parallel(&parallel(build_full(4).unwrap(), Tau::Finite(t), 200), &mut bowls(4, 2, Some(1.0)), &vec![vec![0.0; 2]; 4]).unwrap();
        assert!(out.max_since_at_step <= t as u64);
        assert_eq!(out.updates.len(), 800);
        assert!(out.mixes > 0);
        assert!(!out.snapshots.is_empty());
    }
}

#[test]
fn parallel_infinite_tau_never_blocks() {
    let out = run_parallel(&parallel(build_ring(3).unwrap(), Tau::Infinite, 100), &mut bowls(3, 2, None), &vec![vec![0.0; 2]; 3]).unwrap();
    assert_eq!(out.updates.len(), 300);
}

#[test]
fn parallel_rejects_time_varying_topology() {
    let topo = TopologySpec::new(2, vec![vec![(0, 1)], vec![(1, 0)]]).unwrap();
    let err = run_parallel(&parallel(topo, Tau::Finite(1), 5), &mut idle(2, 1), &[vec![0.0], vec![1.0]]).unwrap_err();
    assert!(matches!(err, GalaError::Config { .. }));
}

#[test]
fn single_agent_allreduce_equals_isolated_gossip() {
    let topo = build_ring(1).unwrap();
    let sim = simulate(
        &settings(topo, Tau::Finite(0), DelaySpec::Constant { delay: 0 }, 30),
        &mut bowls(1, 2, None),
        &[vec![0.5, 0.5]],
        None,
    )
    .unwrap();
    let ar = run_allreduce(&mut bowls(1, 2, None), &[0.5, 0.5], 0.1, StopRule::Iterations(30), true, None).unwrap();
    assert_eq!(sim.final_params[0], ar.final_params);
    assert_eq!(ar.trajectory.len(), 30);
}

#[test]
fn allreduce_replicas_share_parameters() {
    let ar = run_allreduce(&mut bowls(3, 2, None), &[0.0, 0.0], 0.1, StopRule::Iterations(20), false, None).unwrap();
    assert_eq!(ar.iterations, 20);
    assert_eq!(ar.updates.len(), 60);
}

#[test]
fn delays_above_tau_are_rejected() {
    assert!(DelayModel::new(DelaySpec::Constant { delay: 3 }, Tau::Finite(2)).is_err());
    assert!(DelayModel::new(DelaySpec::Uniform { max: None }, Tau::Infinite).is_err());
}

#[test]
fn infinite_tau_tolerates_long_delays() {
    let s = settings(build_ring(3).unwrap(), Tau::Infinite, DelaySpec::Constant { delay: 6 }, 120);
    let out = simulate(&s, &mut bowls(3, 1, None), &vec![vec![0.0]; 3], None).unwrap();
    assert_eq!(out.blocked_iterations, 0);
    assert_eq!(out.max_effective_delay, 6);
    assert_eq!(out.history(Tau::Infinite), 6);
}
