//! Agent state machine for the gossip loop: local step, broadcast,
//! single-slot receive buffers with overwrite, mixing and the staleness guard.

pub mod allreduce;
pub mod parallel;
pub mod sim;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{GalaError, Result};
use crate::learners::{Learner, UpdateStats};

/// Staleness bound; `Infinite` disables the guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tau {
    Finite(usize),
    Infinite,
}

impl Tau {
    pub fn finite(self) -> Option<usize> {
        match self {
            Tau::Finite(t) => Some(t),
            Tau::Infinite => None,
        }
    }

    pub fn allows(self, since: u64) -> bool {
        match self {
            Tau::Finite(t) => since <= t as u64,
            Tau::Infinite => true,
        }
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tau::Finite(t) => write!(f, "{t}"),
            Tau::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Tau {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Tau::Finite(t) => s.serialize_u64(*t as u64),
            Tau::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Tau {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct TauVisitor;
        impl Visitor<'_> for TauVisitor {
            type Value = Tau;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative integer or \"inf\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Tau, E> {
                Ok(Tau::Finite(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Tau, E> {
                if v < 0 {
                    Err(E::custom(format!("tau must be nonnegative, got {v}")))
                } else {
                    Ok(Tau::Finite(v as usize))
                }
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Tau, E> {
                if v == "inf" {
                    Ok(Tau::Infinite)
                } else {
                    Err(E::custom(format!("expected \"inf\", got {v:?}")))
                }
            }
        }
        d.deserialize_any(TauVisitor)
    }
}

/// How long a broadcast spends in flight, in global iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelaySpec {
    Constant { delay: usize },
    /// Uniform on `0..=max`; `max` defaults to tau.
    Uniform {
        #[serde(default)]
        max: Option<usize>,
    },
    /// Deterministic worst case: edge `e` at iteration `k` draws
    /// `schedule[(k + e) % len]`; an empty schedule always uses the maximum.
    Adversarial {
        #[serde(default)]
        schedule: Vec<usize>,
    },
}

impl Default for DelaySpec {
    fn default() -> Self {
        DelaySpec::Constant { delay: 0 }
    }
}

/// A validated delay sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    spec: DelaySpec,
    max: usize,
}

impl DelayModel {
    pub fn new(spec: DelaySpec, tau: Tau) -> Result<Self> {
        let cap = tau.finite();
        let max = match &spec {
            DelaySpec::Constant { delay } => *delay,
            DelaySpec::Uniform { max } => match (max, cap) {
                (Some(m), _) => *m,
                (None, Some(t)) => t,
                (None, None) => {
                    return Err(GalaError::config("delay.max", "required when tau is \"inf\""));
                }
            },
            DelaySpec::Adversarial { schedule } if schedule.is_empty() => cap.ok_or_else(|| {
                GalaError::config("delay.schedule", "required when tau is \"inf\"")
            })?,
            DelaySpec::Adversarial { schedule } => schedule.iter().copied().max().unwrap_or(0),
        };
        if let Some(t) = cap {
            if max > t {
                return Err(GalaError::config(
                    "delay",
                    format!("delays up to {max} exceed tau = {t}"),
                ));
            }
        }
        Ok(DelayModel { spec, max })
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn sample(&self, k: u64, edge_index: usize, rng: &mut impl Rng) -> usize {
        match &self.spec {
            DelaySpec::Constant { delay } => *delay,
            DelaySpec::Uniform { .. } => rng.gen_range(0..=self.max),
            DelaySpec::Adversarial { schedule } if schedule.is_empty() => self.max,
            DelaySpec::Adversarial { schedule } => {
                schedule[((k as usize).wrapping_add(edge_index)) % schedule.len()]
            }
        }
    }
}

/// Which agents run their loop at a global iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationSpec {
    /// Every agent every iteration.
    #[default]
    RoundRobin,
    /// Each agent independently with probability `p` (at least one agent).
    RandomSubset { p: f64 },
    /// Cycles through explicit sets of agent ids.
    Custom { sets: Vec<Vec<usize>> },
}

impl ActivationSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ActivationSpec::RoundRobin => Ok(()),
            ActivationSpec::RandomSubset { p } if !(*p > 0.0 && *p <= 1.0) => {
                Err(GalaError::config("activation.p", "must lie in (0, 1]"))
            }
            ActivationSpec::RandomSubset { .. } => Ok(()),
            ActivationSpec::Custom { sets } => {
                if sets.is_empty() {
                    return Err(GalaError::config("activation.sets", "must be nonempty"));
                }
                for set in sets {
                    if let Some(&a) = set.iter().find(|&&a| a >= n) {
                        return Err(GalaError::config(
                            "activation.sets",
                            format!("unknown agent {a} (n = {n})"),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn active(&self, k: u64, n: usize, rng: &mut impl Rng) -> Vec<bool> {
        match self {
            ActivationSpec::RoundRobin => vec![true; n],
            ActivationSpec::RandomSubset { p } => {
                let mut v: Vec<bool> = (0..n).map(|_| rng.gen_bool(*p)).collect();
                if !v.iter().any(|&b| b) && n > 0 {
                    v[rng.gen_range(0..n)] = true;
                }
                v
            }
            ActivationSpec::Custom { sets } => {
                let set = &sets[(k % sets.len() as u64) as usize];
                let mut v = vec![false; n];
                for &a in set {
                    v[a] = true;
                }
                v
            }
        }
    }
}

/// Immutable parameter snapshot sent along one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipMessage {
    pub sender: usize,
    /// Sender's local iteration when the snapshot was taken.
    pub sent_at: u64,
    /// Global iteration of the send (simulation clock).
    pub sent_global: u64,
    pub payload: Arc<[f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guard {
    Proceed,
    Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub params: Vec<f64>,
    pub local_iter: u64,
    in_peers: Vec<usize>,
    out_peers: Vec<usize>,
    /// Every agent that may ever send to this one; slots are indexed by it.
    known_in: Vec<usize>,
    recv_slots: Vec<Option<GossipMessage>>,
    pub iters_since_last_recv: u64,
    pub rng_seed: u64,
}

/// Senders consumed by one mixing step, with their messages.
pub type Consumed = Vec<GossipMessage>;

impl AgentState {
    /// `known_in` lists every possible in-peer across the schedule.
    pub fn new(id: usize, params: Vec<f64>, known_in: Vec<usize>, rng_seed: u64) -> Self {
        let mut known_in = known_in;
        known_in.sort_unstable();
        known_in.dedup();
        let slots = vec![None; known_in.len()];
        AgentState {
            id,
            params,
            local_iter: 0,
            in_peers: known_in.clone(),
            out_peers: Vec::new(),
            known_in,
            recv_slots: slots,
            iters_since_last_recv: 0,
            rng_seed,
        }
    }

    /// Current in/out peers for this iteration of the schedule.
    pub fn set_peers(&mut self, in_peers: Vec<usize>, out_peers: Vec<usize>) -> Result<()> {
        if let Some(&j) = in_peers.iter().find(|j| self.known_in.binary_search(j).is_err()) {
            return Err(GalaError::protocol(format!(
                "agent {} was not configured to receive from {j}",
                self.id
            )));
        }
        self.in_peers = in_peers;
        self.out_peers = out_peers;
        Ok(())
    }

    pub fn in_peers(&self) -> &[usize] {
        &self.in_peers
    }

    pub fn out_peers(&self) -> &[usize] {
        &self.out_peers
    }

    pub fn slot(&self, sender: usize) -> Option<&GossipMessage> {
        let idx = self.known_in.binary_search(&sender).ok()?;
        self.recv_slots[idx].as_ref()
    }

    /// `params += alpha * direction`.
    pub fn apply_update(&mut self, direction: &[f64], alpha: f64) -> Result<()> {
        if direction.len() != self.params.len() {
            return Err(GalaError::protocol(format!(
                "agent {}: update has length {}, parameters {}",
                self.id,
                direction.len(),
                self.params.len()
            )));
        }
        for (x, u) in self.params.iter_mut().zip(direction) {
            *x += alpha * u;
        }
        Ok(())
    }

    pub fn snapshot(&self, global: u64) -> GossipMessage {
        GossipMessage {
            sender: self.id,
            sent_at: self.local_iter,
            sent_global: global,
            payload: Arc::from(self.params.as_slice()),
        }
    }

    /// Writes a delivered message into its slot; a message older than the
    /// one already held is discarded. Returns whether the slot changed.
    pub fn receive(&mut self, msg: GossipMessage) -> Result<bool> {
        let idx = self.known_in.binary_search(&msg.sender).map_err(|_| {
            GalaError::protocol(format!(
                "agent {} received from non-in-peer {}",
                self.id, msg.sender
            ))
        })?;
        if msg.payload.len() != self.params.len() {
            return Err(GalaError::protocol(format!(
                "agent {}: message from {} has length {}, expected {}",
                self.id,
                msg.sender,
                msg.payload.len(),
                self.params.len()
            )));
        }
        let slot = &mut self.recv_slots[idx];
        if let Some(old) = slot {
            if old.sent_at >= msg.sent_at {
                return Ok(false);
            }
        }
        *slot = Some(msg);
        Ok(true)
    }

    pub fn slots_full(&self) -> bool {
        !self.in_peers.is_empty() && self.in_peers.iter().all(|j| self.slot(*j).is_some())
    }

    /// Averages with every current in-peer slot if all are full, clearing
    /// them and resetting the staleness counter.
    pub fn try_mix(&mut self) -> Option<Consumed> {
        if !self.slots_full() {
            return None;
        }
        let mut consumed = Vec::with_capacity(self.in_peers.len());
        for j in self.in_peers.clone() {
            let idx = self.known_in.binary_search(&j).expect("current in-peer is known");
            consumed.push(self.recv_slots[idx].take().expect("slot checked full"));
        }
        let w = 1.0 / (1 + consumed.len()) as f64;
        for (c, x) in self.params.iter_mut().enumerate() {
            let sum: f64 = *x + consumed.iter().map(|m| m.payload[c]).sum::<f64>();
            *x = sum * w;
        }
        self.iters_since_last_recv = 0;
        Some(consumed)
    }
}

/// Blocks iff more than `tau` local steps have passed without a receipt.
pub fn staleness_guard(state: &AgentState, tau: Tau) -> Guard {
    if tau.allows(state.iters_since_last_recv) {
        Guard::Proceed
    } else {
        Guard::Block
    }
}

/// One local optimisation: gradient, direction, `params += alpha * u`.
pub fn local_step(state: &mut AgentState, learner: &mut dyn Learner, alpha: f64) -> Result<LocalStep> {
    let sample = learner.gradient(&state.params)?;
    let direction = learner.direction(&sample.grad);
    state.apply_update(&direction, alpha)?;
    state.local_iter += 1;
    Ok(LocalStep {
        grad: sample.grad,
        direction,
        stats: sample.stats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalStep {
    pub grad: Vec<f64>,
    pub direction: Vec<f64>,
    pub stats: UpdateStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: LocalStep,
    pub broadcast: GossipMessage,
    pub mixed: Option<Consumed>,
}

/// A full loop of one agent in program order: optimise, broadcast, write
/// the inbox into the receive slots, then mix if every slot is full.
pub fn agent_step(
    state: &mut AgentState,
    learner: &mut dyn Learner,
    inbox: Vec<GossipMessage>,
    alpha: f64,
    global: u64,
) -> Result<StepOutcome> {
    let step = local_step(state, learner, alpha)?;
    let broadcast = state.snapshot(global);
    for msg in inbox {
        state.receive(msg)?;
    }
    let mixed = state.try_mix();
    if mixed.is_none() && !state.in_peers.is_empty() {
        state.iters_since_last_recv += 1;
    }
    Ok(StepOutcome {
        step,
        broadcast,
        mixed,
    })
}
