//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{ActivationSpec, DelayModel, DelaySpec, Tau};
use crate::error::{GalaError, Result};
use crate::learners::a2c::A2cConfig;
use crate::learners::env::EnvSpec;
use crate::topology::{build_full, build_ring, TopologySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GalaSim,
    GalaParallel,
    Allreduce,
    GossipOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::GalaSim => "gala-sim",
            Mode::GalaParallel => "gala-parallel",
            Mode::Allreduce => "allreduce",
            Mode::GossipOnly => "gossip-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeList {
    Phases(Vec<Vec<[usize; 2]>>),
    Single(Vec<[usize; 2]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Full,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub n: usize,
    /// Custom only: `[from, to]` pairs, optionally one list per phase.
    #[serde(default)]
    pub edges: Option<EdgeList>,
    #[serde(default)]
    pub period: Option<usize>,
}

impl TopologyConfig {
    pub fn build(&self) -> Result<TopologySpec> {
        match self.kind {
            TopologyKind::Ring | TopologyKind::Full => {
                if self.edges.is_some() {
                    return Err(GalaError::config("topology.edges", "only allowed for custom topologies"));
                }
                if self.period.is_some_and(|p| p != 1) {
                    return Err(GalaError::config("topology.period", "ring and full topologies are static"));
                }
                let built = if self.kind == TopologyKind::Ring {
                    build_ring(self.n)
                } else {
                    build_full(self.n)
                };
                built.map_err(|e| GalaError::config("topology.n", e.to_string()))
            }
            TopologyKind::Custom => {
                let phases: Vec<Vec<(usize, usize)>> = match &self.edges {
                    None => return Err(GalaError::config("topology.edges", "required for custom topologies")),
                    Some(EdgeList::Single(e)) => vec![e.iter().map(|p| (p[0], p[1])).collect()],
                    Some(EdgeList::Phases(ps)) => ps
                        .iter()
                        .map(|ph| ph.iter().map(|p| (p[0], p[1])).collect())
                        .collect(),
                };
                if let Some(p) = self.period {
                    if p != phases.len() {
                        return Err(GalaError::config(
                            "topology.period",
                            format!("period {p} but {} edge phases given", phases.len()),
                        ));
                    }
                }
                TopologySpec::new(self.n, phases).map_err(|e| GalaError::config("topology.edges", e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Reference learning rate.
    #[serde(default = "default_synthetic_lr")]
    pub lr: f64,
    /// Standard deviation of the additive gradient noise.
    #[serde(default)]
    pub noise: f64,
    /// Cap on each agent's update norm.
    #[serde(default)]
    pub cap: Option<f64>,
    /// Scale of the per-agent bowl centres (standard normal times this).
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
}

fn default_synthetic_lr() -> f64 {
    0.1
}

fn default_center_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    A2c(A2cConfig),
    Synthetic(SyntheticConfig),
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::A2c(A2cConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// Every agent starts from the same vector (model init for A2C, zero otherwise).
    #[default]
    Identical,
    /// Independent uniform draws per agent and coordinate.
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub enabled: bool,
    pub stride: usize,
    pub prop2: bool,
    /// Window length for the geometric certificate; default `8 (tau + B + 1)`.
    pub beta_window: Option<usize>,
    pub exact: bool,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            enabled: true,
            stride: 1,
            prop2: true,
            beta_window: None,
            exact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Env steps between greedy evaluations (0 disables intermediate ones).
    pub interval: u64,
    pub episodes: usize,
    pub target_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            interval: 10_000,
            episodes: 10,
            target_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub learners: Vec<usize>,
    #[serde(default)]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub tau: Vec<Tau>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub topology: TopologyConfig,
    #[serde(default = "default_tau")]
    pub tau: Tau,
    #[serde(default)]
    pub delay: DelaySpec,
    #[serde(default)]
    pub activation: ActivationSpec,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub env: Option<EnvSpec>,
    #[serde(default)]
    pub init: InitConfig,
    /// Parameter dimension for synthetic and gossip-only runs.
    #[serde(default)]
    pub dim: Option<usize>,
    pub seeds: Vec<u64>,
    /// Env steps (A2C) or global iterations (otherwise).
    pub total_steps: u64,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default = "default_corr_stride")]
    pub corr_stride: u64,
    /// Only correlation samples at or before this step enter the summary mean.
    #[serde(default)]
    pub corr_until: Option<u64>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
    /// Nominal score for success rates; defaults to the exact optimum.
    #[serde(default)]
    pub reference_score: Option<f64>,
    #[serde(default)]
    pub log_protocol: Option<bool>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_tau() -> Tau {
    Tau::Finite(0)
}

fn default_corr_stride() -> u64 {
    500
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_success_threshold() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error(de)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn is_a2c(&self) -> bool {
        matches!(self.learner, LearnerConfig::A2c(_)) && self.mode != Mode::GossipOnly
    }

    pub fn validate(&self) -> Result<()> {
        let topo = self.topology.build()?;
        if self.seeds.is_empty() {
            return Err(GalaError::config("seeds", "must list at least one seed"));
        }
        if self.total_steps == 0 {
            return Err(GalaError::config("total_steps", "must be positive"));
        }
        DelayModel::new(self.delay.clone(), self.tau)?;
        self.activation.validate(topo.n())?;
        if self.bounds.enabled && self.bounds.prop2 && self.tau == Tau::Infinite && self.mode == Mode::GalaSim {
            return Err(GalaError::config("bounds.prop2", "the stationary bound needs a finite tau"));
        }
        if self.bounds.stride == 0 {
            return Err(GalaError::config("bounds.stride", "must be positive"));
        }
        if self.bounds.beta_window == Some(0) {
            return Err(GalaError::config("bounds.beta_window", "must be positive"));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err(GalaError::config("success_threshold", "must lie in (0, 1]"));
        }
        if self.reference_score.is_some_and(|r| !(r > 0.0)) {
            return Err(GalaError::config("reference_score", "must be positive"));
        }
        if let InitConfig::Uniform { low, high } = self.init {
            if !(low < high) {
                return Err(GalaError::config("init", "low must be below high"));
            }
        }
        match &self.learner {
            LearnerConfig::A2c(a) if self.mode != Mode::GossipOnly => {
                a.validate()?;
                let env = self
                    .env
                    .ok_or_else(|| GalaError::config("env", "required for actor-critic learners"))?;
                env.validate()?;
                if self.eval.episodes == 0 {
                    return Err(GalaError::config("eval.episodes", "must be positive"));
                }
            }
            LearnerConfig::Synthetic(s) => {
                if !(s.lr > 0.0) {
                    return Err(GalaError::config("learner.lr", "must be positive"));
                }
                if !(s.noise >= 0.0) {
                    return Err(GalaError::config("learner.noise", "must be nonnegative"));
                }
                if s.cap.is_some_and(|c| !(c > 0.0)) {
                    return Err(GalaError::config("learner.cap", "must be positive"));
                }
                self.require_dim()?;
            }
            _ => {
                self.require_dim()?;
            }
        }
        if self.mode == Mode::Allreduce && self.topology.kind == TopologyKind::Custom {
            log::warn!("allreduce ignores the custom topology edges; only n = {} is used", topo.n());
        }
        if self.mode == Mode::GalaParallel && !topo.is_static() {
            return Err(GalaError::config("topology.period", "parallel mode needs a static topology"));
        }
        if let Some(sw) = &self.sweep {
            if sw.learners.iter().any(|&n| n == 0) {
                return Err(GalaError::config("sweep.learners", "learner counts must be positive"));
            }
        }
        Ok(())
    }

    fn require_dim(&self) -> Result<usize> {
        match self.dim {
            Some(d) if d > 0 => Ok(d),
            _ => Err(GalaError::config("dim", "a positive dimension is required")),
        }
    }
}

fn serde_path_to_error(de: &mut serde_json::Deserializer<serde_json::de::StrRead<'_>>) -> Result<ExperimentConfig> {
    ExperimentConfig::deserialize(de).map_err(|e| {
        let msg = e.to_string();
        let key = offending_key(&msg).unwrap_or_else(|| "<root>".to_string());
        GalaError::config(key, msg)
    })
}

/// Best-effort extraction of the key named in a serde error message.
fn offending_key(msg: &str) -> Option<String> {
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            return rest.find('`').map(|end| rest[..end].to_string());
        }
    }
    if msg.contains("tau") {
        return Some("tau".into());
    }
    None
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| GalaError::io(path, e))?;
    ExperimentConfig::from_json(&text)
}
