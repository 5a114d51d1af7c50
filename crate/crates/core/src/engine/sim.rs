//! Deterministic discrete-time execution of the gossip loop.
//!
//! Each global iteration `k` runs three phases:
//! 1. every active, unblocked agent takes a local step and broadcasts its
//!    new parameters on each out-edge that has no message in flight (a busy
//!    edge drops the new snapshot);
//! 2. messages whose arrival time is `<= k` are written into receive slots;
//! 3. every agent whose current in-peer slots are all full mixes.
//!
//! The recorded mixing decisions, update matrices and states reproduce the
//! run exactly through `X~(k+1) = P~(k) (X~(k) + alpha G~(k))`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{staleness_guard, ActivationSpec, AgentState, DelayModel, GossipMessage, Guard, Tau};
use crate::error::{GalaError, Result};
use crate::learners::{Learner, UpdateStats};
use crate::spectral::{AugmentedMixing, MixRow};
use crate::topology::{Edge, TopologySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    Iterations(u64),
    /// Stop once the summed environment steps of all agents reach the total.
    EnvSteps(u64),
}

#[derive(Debug, Clone)]
pub struct SimSettings {
    pub topology: TopologySpec,
    pub tau: Tau,
    pub delay: DelayModel,
    pub activation: ActivationSpec,
    pub alpha: f64,
    pub stop: StopRule,
    pub seed: u64,
    pub record_trace: bool,
    pub log_protocol: bool,
    /// Hard cap on iterations for env-step runs.
    pub max_iterations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Step,
    Send,
    Recv,
    Mix,
    Block,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Step => "step",
            EventKind::Send => "send",
            EventKind::Recv => "recv",
            EventKind::Mix => "mix",
            EventKind::Block => "block",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolEvent {
    pub k: u64,
    pub agent: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub k: u64,
    /// Environment steps of all agents up to and including this update.
    pub global_step: u64,
    pub agent: usize,
    pub stats: UpdateStats,
    /// `||u||` of the applied direction.
    pub update_norm: f64,
}

/// Everything needed to replay a run as a matrix recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedTrace {
    pub n: usize,
    pub mix_rows: Vec<Vec<MixRow>>,
    /// `G(k)`, `n x d`, zero rows for agents that did not step.
    pub updates: Vec<DMatrix<f64>>,
    /// `X(k)` for `k = 0..=K`.
    pub states: Vec<DMatrix<f64>>,
}

impl RecordedTrace {
    /// Augmented matrices with `history` virtual nodes per agent.
    pub fn augmented(&self, history: usize) -> Result<Vec<AugmentedMixing>> {
        self.mix_rows
            .iter()
            .map(|rows| AugmentedMixing::from_mix_rows(self.n, history, rows))
            .collect()
    }

    /// The explicit recursion `X~ <- P~ (X~ + alpha G~)` from `X(0)`,
    /// returning the real-agent rows after every iteration.
    pub fn replay(&self, alpha: f64, history: usize) -> Result<Vec<DMatrix<f64>>> {
        let mats = self.augmented(history)?;
        let mut x = crate::spectral::lift_initial(&self.states[0], history);
        let mut out = Vec::with_capacity(mats.len());
        for (p, g) in mats.iter().zip(&self.updates) {
            let y = &x + crate::spectral::lift_update(g, history) * alpha;
            x = p.apply(&y);
            out.push(x.rows(0, self.n).into_owned());
        }
        Ok(out)
    }
}

/// State visible to the per-iteration hook.
pub struct IterationView<'a> {
    pub k: u64,
    pub env_steps: u64,
    pub agents: &'a [AgentState],
    /// Raw gradient of each agent's most recent step.
    pub last_grads: &'a [Option<Vec<f64>>],
}

pub type Hook<'a> = dyn FnMut(&IterationView<'_>) -> Result<()> + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub final_params: Vec<Vec<f64>>,
    pub iterations: u64,
    pub env_steps: u64,
    pub updates: Vec<UpdateRecord>,
    pub protocol: Vec<ProtocolEvent>,
    pub trace: Option<RecordedTrace>,
    /// Largest `k_mix - k_send` over all consumed messages.
    pub max_effective_delay: usize,
    /// Consumed messages whose effective delay exceeded tau.
    pub staleness_violations: usize,
    /// Largest staleness counter seen when an agent started a step.
    pub max_since_at_step: u64,
    pub blocked_iterations: u64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
}

impl SimOutput {
    /// Virtual-node depth needed to represent every observed delay.
    pub fn history(&self, tau: Tau) -> usize {
        tau.finite().unwrap_or(0).max(self.max_effective_delay)
    }
}

struct InFlight {
    arrival: u64,
    msg: GossipMessage,
}

fn known_in_peers(topo: &TopologySpec) -> Vec<Vec<usize>> {
    let mut known = vec![Vec::new(); topo.n()];
    for phase in 0..topo.period() as u64 {
        for &(j, i) in topo.edges_at(phase) {
            known[i].push(j);
        }
    }
    known
}

pub fn simulate(
    settings: &SimSettings,
    learners: &mut [Box<dyn Learner>],
    init: &[Vec<f64>],
    hook: Option<&mut Hook<'_>>,
) -> Result<SimOutput> {
    let n = settings.topology.n();
    if learners.len() != n || init.len() != n {
        return Err(GalaError::invalid(format!(
            "{n} agents need {n} learners and initial vectors (got {}, {})",
            learners.len(),
            init.len()
        )));
    }
    let d = init[0].len();
    if init.iter().any(|x| x.len() != d) || learners.iter().any(|l| l.dim() != d) {
        return Err(GalaError::invalid("agents disagree on the parameter dimension"));
    }
    settings.activation.validate(n)?;
    let mut hook = hook;

    let known = known_in_peers(&settings.topology);
    let mut agents: Vec<AgentState> = (0..n)
        .map(|i| AgentState::new(i, init[i].clone(), known[i].clone(), settings.seed.wrapping_add(i as u64)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut in_flight: BTreeMap<Edge, InFlight> = BTreeMap::new();
    let mut last_grads: Vec<Option<Vec<f64>>> = vec![None; n];

    let mut out = SimOutput {
        final_params: Vec::new(),
        iterations: 0,
        env_steps: 0,
        updates: Vec::new(),
        protocol: Vec::new(),
        trace: None,
        max_effective_delay: 0,
        staleness_violations: 0,
        max_since_at_step: 0,
        blocked_iterations: 0,
        messages_sent: 0,
        messages_dropped: 0,
    };
    let mut trace = settings.record_trace.then(|| RecordedTrace {
        n,
        mix_rows: Vec::new(),
        updates: Vec::new(),
        states: vec![stack(&agents, d)],
    });
    let log = settings.log_protocol;
    let event = |events: &mut Vec<ProtocolEvent>, k: u64, agent: usize, kind: EventKind| {
        if log {
            events.push(ProtocolEvent { k, agent, kind });
        }
    };

    let mut k: u64 = 0;
    loop {
        let done = match settings.stop {
            StopRule::Iterations(total) => k >= total,
            StopRule::EnvSteps(total) => out.env_steps >= total || k >= settings.max_iterations,
        };
        if done {
            break;
        }
        let edges = settings.topology.edges_at(k);
        for agent in agents.iter_mut() {
            let i = agent.id;
            let ins = edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
            let outs = edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
            agent.set_peers(ins, outs)?;
        }
        let active = settings.activation.active(k, n, &mut rng);
        let mut g = DMatrix::zeros(n, d);
        let mut stepped = vec![false; n];

        for i in 0..n {
            if !active[i] {
                continue;
            }
            let agent = &mut agents[i];
            if staleness_guard(agent, settings.tau) == Guard::Block {
                event(&mut out.protocol, k, i, EventKind::Block);
                continue;
            }
            out.max_since_at_step = out.max_since_at_step.max(agent.iters_since_last_recv);
            let step = super::local_step(agent, learners[i].as_mut(), settings.alpha)?;
            stepped[i] = true;
            out.env_steps += step.stats.env_steps;
            let update_norm = step.direction.iter().map(|u| u * u).sum::<f64>().sqrt();
            for (c, u) in step.direction.iter().enumerate() {
                g[(i, c)] = *u;
            }
            last_grads[i] = Some(step.grad);
            out.updates.push(UpdateRecord {
                k,
                global_step: out.env_steps,
                agent: i,
                stats: step.stats,
                update_norm,
            });
            event(&mut out.protocol, k, i, EventKind::Step);

            let snapshot = agent.snapshot(k);
            for &j in agent.out_peers() {
                let edge = (i, j);
                if in_flight.contains_key(&edge) {
                    out.messages_dropped += 1;
                    continue;
                }
                let edge_index = edges.iter().position(|e| *e == edge).unwrap_or(0);
                let delay = settings.delay.sample(k, edge_index, &mut rng);
                in_flight.insert(
                    edge,
                    InFlight {
                        arrival: k + delay as u64,
                        msg: snapshot.clone(),
                    },
                );
                out.messages_sent += 1;
                event(&mut out.protocol, k, i, EventKind::Send);
            }
        }

        let arrived: Vec<Edge> = in_flight
            .iter()
            .filter(|(_, f)| f.arrival <= k)
            .map(|(e, _)| *e)
            .collect();
        for edge in arrived {
            let f = in_flight.remove(&edge).expect("listed as arrived");
            agents[edge.1].receive(f.msg)?;
            event(&mut out.protocol, k, edge.1, EventKind::Recv);
        }

        let mut rows: Vec<MixRow> = vec![None; n];
        for i in 0..n {
            let agent = &mut agents[i];
            if let Some(consumed) = agent.try_mix() {
                let mut inputs = Vec::with_capacity(consumed.len());
                for m in &consumed {
                    let delay = (k - m.sent_global) as usize;
                    out.max_effective_delay = out.max_effective_delay.max(delay);
                    if let Tau::Finite(t) = settings.tau {
                        if delay > t {
                            out.staleness_violations += 1;
                        }
                    }
                    inputs.push((m.sender, delay));
                }
                rows[i] = Some(inputs);
                event(&mut out.protocol, k, i, EventKind::Mix);
            } else if stepped[i] && !agent.in_peers().is_empty() {
                agent.iters_since_last_recv += 1;
            }
        }

        if agents.iter().all(|a| staleness_guard(a, settings.tau) == Guard::Block) {
            out.blocked_iterations += 1;
            if in_flight.is_empty() {
                return Err(GalaError::protocol(format!(
                    "deadlock at iteration {k}: every agent is blocked and no message is in flight"
                )));
            }
        }

        if let Some(t) = trace.as_mut() {
            t.mix_rows.push(rows);
            t.updates.push(g);
            t.states.push(stack(&agents, d));
        }
        k += 1;
        if let Some(h) = hook.as_deref_mut() {
            h(&IterationView {
                k,
                env_steps: out.env_steps,
                agents: &agents,
                last_grads: &last_grads,
            })?;
        }
    }
    out.iterations = k;
    out.final_params = agents.into_iter().map(|a| a.params).collect();
    out.trace = trace;
    Ok(out)
}

fn stack(agents: &[AgentState], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(agents.len(), d, |i, c| agents[i].params[c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::DelaySpec;
    use crate::learners::synthetic::SyntheticLearner;
    use crate::spectral::consensus_distance;
    use crate::topology::build_ring;

    fn settings(n: usize, tau: usize, delay: DelaySpec, k: u64) -> SimSettings {
        SimSettings {
            topology: build_ring(n).unwrap(),
            tau: Tau::Finite(tau),
            delay: DelayModel::new(delay, Tau::Finite(tau)).unwrap(),
            activation: ActivationSpec::RoundRobin,
            alpha: 0.1,
            stop: StopRule::Iterations(k),
            seed: 5,
            record_trace: true,
            log_protocol: true,
            max_iterations: u64::MAX,
        }
    }

    fn bowls(n: usize, d: usize) -> Vec<Box<dyn Learner>> {
        (0..n)
            .map(|i| {
                let c = (0..d).map(|j| (i * d + j) as f64 * 0.3 - 1.0).collect();
                Box::new(SyntheticLearner::new(c, 0.05, None, i as u64).unwrap()) as Box<dyn Learner>
            })
            .collect()
    }

    #[test]
    fn replay_matches_simulation() {
        for tau in 0..3 {
            let s = settings(4, tau, DelaySpec::Uniform { max: None }, 60);
            let mut l = bowls(4, 3);
            let out = simulate(&s, &mut l, &vec![vec![0.5; 3]; 4], None).unwrap();
            let trace = out.trace.as_ref().unwrap();
            let replay = trace.replay(s.alpha, out.history(s.tau)).unwrap();
            for (a, b) in replay.iter().zip(&trace.states[1..]) {
                assert!((a - b).amax() < 1e-12);
            }
            assert_eq!(out.staleness_violations, 0);
            assert!(out.max_effective_delay <= tau);
        }
    }

    #[test]
    fn deterministic() {
        let s = settings(4, 2, DelaySpec::Uniform { max: None }, 40);
        let a = simulate(&s, &mut bowls(4, 2), &vec![vec![0.0; 2]; 4], None).unwrap();
        let b = simulate(&s, &mut bowls(4, 2), &vec![vec![0.0; 2]; 4], None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gossip_only_converges() {
        let s = settings(5, 0, DelaySpec::Constant { delay: 0 }, 400);
        let mut l: Vec<Box<dyn Learner>> = (0..5)
            .map(|_| Box::new(SyntheticLearner::new(vec![0.0], 0.0, None, 0).unwrap()) as Box<dyn Learner>)
            .collect();
        let s = SimSettings { alpha: 0.0, ..s };
        let init: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let out = simulate(&s, &mut l, &init, None).unwrap();
        for x in &out.final_params {
            assert!((x[0] - 2.0).abs() < 1e-10);
        }
        let t = out.trace.unwrap();
        assert!(consensus_distance(t.states.last().unwrap()) < 1e-9);
    }

    #[test]
    fn adversarial_delays_block_but_progress() {
        let s = SimSettings {
            activation: ActivationSpec::RandomSubset { p: 0.5 },
            ..settings(4, 2, DelaySpec::Adversarial { schedule: vec![] }, 200)
        };
        let out = simulate(&s, &mut bowls(4, 2), &vec![vec![0.0; 2]; 4], None).unwrap();
        assert!(out.max_since_at_step <= 2);
        assert_eq!(out.max_effective_delay, 2);
        assert!(out.protocol.iter().any(|e| e.kind == EventKind::Block));
        assert!(out.updates.len() > 100);
        assert_eq!(out.staleness_violations, 0);
    }
}
