//! Wall-clock execution: one thread per agent, one bounded channel per edge.
//!
//! Edge channels hold up to `tau + 1` messages (unbounded for an infinite
//! tau) and a full channel makes the sender wait. Messages are consumed in
//! order: an edge is read only while its receive slot is empty, so each mix
//! uses the oldest unconsumed snapshot of every in-peer. A blocked agent waits
//! on its in-edges; once every in-peer has finished and its channels are
//! drained the agent is released and completes its remaining steps without
//! the guard. With `tau = 0` on a ring this is lock-step synchronous gossip.

use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Select, SendTimeoutError, Sender, TryRecvError};

use super::sim::UpdateRecord;
use super::{local_step, staleness_guard, AgentState, GossipMessage, Guard, Tau};
use crate::error::{GalaError, Result};
use crate::learners::Learner;
use crate::topology::TopologySpec;

#[derive(Debug, Clone)]
pub struct ParallelSettings {
    pub topology: TopologySpec,
    pub tau: Tau,
    pub alpha: f64,
    pub steps_per_agent: u64,
    /// Emit a parameter snapshot every `observe_stride` local steps.
    pub observe_stride: u64,
    /// Longest a blocked agent waits for a message before giving up.
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub agent: usize,
    pub local_iter: u64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelOutput {
    pub final_params: Vec<Vec<f64>>,
    /// `k` is the agent's local iteration; `global_step` its own env steps.
    pub updates: Vec<UpdateRecord>,
    pub snapshots: Vec<Snapshot>,
    pub max_since_at_step: u64,
    /// Steps taken after all in-peers had finished.
    pub released_steps: u64,
    pub mixes: u64,
    pub wall_time: Duration,
}

enum Event {
    Update(UpdateRecord),
    Snapshot(Snapshot),
}

struct WorkerReport {
    params: Vec<f64>,
    max_since: u64,
    released: u64,
    mixes: u64,
}

struct Worker<'a> {
    state: AgentState,
    learner: &'a mut Box<dyn Learner>,
    outs: Vec<Sender<GossipMessage>>,
    ins: Vec<Receiver<GossipMessage>>,
    senders: Vec<usize>,
    events: Sender<Event>,
}

impl Worker<'_> {
    fn drain(&mut self, open: &mut [bool]) -> Result<()> {
        for (idx, rx) in self.ins.iter().enumerate() {
            if !open[idx] || self.state.slot(self.senders[idx]).is_some() {
                continue;
            }
            match rx.try_recv() {
                Ok(msg) => {
                    self.state.receive(msg)?;
                }
                Err(TryRecvError::Empty) => {}
                Err(TryRecvError::Disconnected) => open[idx] = false,
            }
        }
        Ok(())
    }

    /// Receives and mixes until `tau` admits another step. Returns `true` if
    /// the agent was released because every in-peer finished.
    fn wait_for_mix(&mut self, open: &mut [bool], report: &mut WorkerReport, tau: Tau, timeout: Duration) -> Result<bool> {
        while staleness_guard(&self.state, tau) == Guard::Block {
            if self.state.try_mix().is_some() {
                report.mixes += 1;
                continue;
            }
            let waiting: Vec<usize> = (0..self.ins.len())
                .filter(|&idx| open[idx] && self.state.slot(self.senders[idx]).is_none())
                .collect();
            if waiting.is_empty() {
                return Ok(true);
            }
            let mut sel = Select::new();
            for &idx in &waiting {
                sel.recv(&self.ins[idx]);
            }
            let ready = sel.select_timeout(timeout).map_err(|_| {
                GalaError::protocol(format!(
                    "agent {} blocked for more than {:?} without a message",
                    self.state.id, timeout
                ))
            })?;
            let idx = waiting[ready.index()];
            match ready.recv(&self.ins[idx]) {
                Ok(msg) => {
                    self.state.receive(msg)?;
                }
                Err(_) => open[idx] = false,
            }
            self.drain(open)?;
        }
        Ok(false)
    }

    fn run(mut self, settings: &ParallelSettings) -> Result<WorkerReport> {
        let mut open = vec![true; self.ins.len()];
        let mut report = WorkerReport {
            params: Vec::new(),
            max_since: 0,
            released: 0,
            mixes: 0,
        };
        let mut env_steps = 0u64;
        for _ in 0..settings.steps_per_agent {
            let released = self.wait_for_mix(&mut open, &mut report, settings.tau, settings.timeout)?;
            if released {
                report.released += 1;
            } else {
                report.max_since = report.max_since.max(self.state.iters_since_last_recv);
            }

            let step = local_step(&mut self.state, self.learner.as_mut(), settings.alpha)?;
            env_steps += step.stats.env_steps;
            let update_norm = step.direction.iter().map(|u| u * u).sum::<f64>().sqrt();
            let msg = self.state.snapshot(self.state.local_iter);
            for tx in &self.outs {
                match tx.send_timeout(msg.clone(), settings.timeout) {
                    Ok(()) | Err(SendTimeoutError::Disconnected(_)) => {}
                    Err(SendTimeoutError::Timeout(_)) => {
                        return Err(GalaError::protocol(format!(
                            "agent {} could not deliver a message within {:?}",
                            self.state.id, settings.timeout
                        )));
                    }
                }
            }
            self.drain(&mut open)?;
            if self.state.try_mix().is_some() {
                report.mixes += 1;
            } else if !self.ins.is_empty() {
                self.state.iters_since_last_recv += 1;
            }
            let _ = self.events.send(Event::Update(UpdateRecord {
                k: self.state.local_iter,
                global_step: env_steps,
                agent: self.state.id,
                stats: step.stats,
                update_norm,
            }));
            if settings.observe_stride > 0 && self.state.local_iter % settings.observe_stride == 0 {
                let _ = self.events.send(Event::Snapshot(Snapshot {
                    agent: self.state.id,
                    local_iter: self.state.local_iter,
                    params: self.state.params.clone(),
                }));
            }
        }
        // The last step's incoming snapshots complete its iteration.
        self.wait_for_mix(&mut open, &mut report, Tau::Finite(0), settings.timeout)?;
        report.params = self.state.params;
        Ok(report)
    }
}

pub fn run_parallel(settings: &ParallelSettings, learners: &mut [Box<dyn Learner>], init: &[Vec<f64>]) -> Result<ParallelOutput> {
    let topo = &settings.topology;
    let n = topo.n();
    if !topo.is_static() {
        return Err(GalaError::config("topology.period", "parallel mode needs a static topology"));
    }
    if learners.len() != n || init.len() != n {
        return Err(GalaError::invalid("parallel run needs one learner and initial vector per agent"));
    }
    let start = Instant::now();
    let mut outs: Vec<Vec<Sender<GossipMessage>>> = vec![Vec::new(); n];
    let mut ins: Vec<Vec<Receiver<GossipMessage>>> = vec![Vec::new(); n];
    let mut known: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(j, i) in topo.edges_at(0) {
        let (tx, rx) = match settings.tau {
            Tau::Finite(t) => bounded(t + 1),
            Tau::Infinite => unbounded(),
        };
        outs[j].push(tx);
        ins[i].push(rx);
        known[i].push(j);
    }
    let (events_tx, events_rx) = unbounded();

    let results: Vec<std::thread::Result<Result<WorkerReport>>> = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(n);
        for (i, learner) in learners.iter_mut().enumerate() {
            let mut state = AgentState::new(i, init[i].clone(), known[i].clone(), i as u64);
            let in_peers = topo.in_peers(0, i);
            let out_peers = topo.out_peers(0, i);
            if let Err(e) = state.set_peers(in_peers, out_peers) {
                handles.push(scope.spawn(move || Err(e)));
                continue;
            }
            let worker = Worker {
                state,
                learner,
                outs: std::mem::take(&mut outs[i]),
                ins: std::mem::take(&mut ins[i]),
                senders: known[i].clone(),
                events: events_tx.clone(),
            };
            handles.push(scope.spawn(move || worker.run(settings)));
        }
        handles.into_iter().map(|h| h.join()).collect()
    });
    drop(events_tx);

    let mut out = ParallelOutput {
        final_params: Vec::with_capacity(n),
        updates: Vec::new(),
        snapshots: Vec::new(),
        max_since_at_step: 0,
        released_steps: 0,
        mixes: 0,
        wall_time: Duration::ZERO,
    };
    for (i, r) in results.into_iter().enumerate() {
        let report = match r {
            Ok(res) => res?,
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown panic".into());
                return Err(GalaError::Worker(format!("agent {i} panicked: {msg}")));
            }
        };
        out.max_since_at_step = out.max_since_at_step.max(report.max_since);
        out.released_steps += report.released;
        out.mixes += report.mixes;
        out.final_params.push(report.params);
    }
    for ev in events_rx.try_iter() {
        match ev {
            Event::Update(u) => out.updates.push(u),
            Event::Snapshot(s) => out.snapshots.push(s),
        }
    }
    out.updates.sort_by_key(|u| (u.k, u.agent));
    out.snapshots.sort_by_key(|s| (s.local_iter, s.agent));
    out.wall_time = start.elapsed();
    Ok(out)
}

