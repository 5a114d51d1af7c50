//! Batched n-step advantage actor-critic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{EnvInstance, EnvSpec};
use super::model::{entropy, log_softmax, softmax, PolicyValueModel};
use super::optim::{clip_global_norm, Optimizer, OptimizerSpec};
use super::{Episode, GradientSample, Learner, UpdateStats};
use crate::error::{GalaError, Result};
use crate::learners::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct A2cConfig {
    pub lr: f64,
    pub gamma: f64,
    pub entropy_coeff: f64,
    pub horizon: usize,
    pub envs_per_learner: usize,
    pub vf_coeff: f64,
    pub clip_norm: f64,
    /// Multiply `lr` by `sqrt(number of learners)`.
    pub lr_scale: bool,
    pub reward_clip: bool,
    pub optimizer: OptimizerSpec,
    pub model: ModelSpec,
    pub max_episode_steps: Option<usize>,
}

impl Default for A2cConfig {
    fn default() -> Self {
        A2cConfig {
            lr: 7e-4,
            gamma: 0.99,
            entropy_coeff: 0.01,
            horizon: 5,
            envs_per_learner: 4,
            vf_coeff: 0.5,
            clip_norm: 0.5,
            lr_scale: false,
            reward_clip: false,
            optimizer: OptimizerSpec::Sgd,
            model: ModelSpec::Tabular,
            max_episode_steps: None,
        }
    }
}

impl A2cConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("learner.lr", self.lr),
            ("learner.entropy_coeff", self.entropy_coeff),
            ("learner.vf_coeff", self.vf_coeff),
        ];
        for (key, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GalaError::config(key, "must be finite and nonnegative"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(GalaError::config("learner.gamma", "must lie in [0, 1)"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(GalaError::config("learner.clip_norm", "must be positive"));
        }
        if self.horizon == 0 {
            return Err(GalaError::config("learner.horizon", "must be at least 1"));
        }
        if self.envs_per_learner == 0 {
            return Err(GalaError::config("learner.envs_per_learner", "must be at least 1"));
        }
        Ok(())
    }

    pub fn effective_lr(&self, learners: usize) -> f64 {
        if self.lr_scale {
            self.lr * (learners as f64).sqrt()
        } else {
            self.lr
        }
    }
}

/// `N` steps from each of `W` environment copies, stored copy-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub horizon: usize,
    pub copies: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// `s_{t+N}` per copy (the reset state if the last step ended an episode).
    pub bootstrap_states: Vec<usize>,
    pub episodes: Vec<Episode>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Environment copy together with the RNG that samples its actions.
#[derive(Debug, Clone)]
pub struct EnvCopy {
    pub env: EnvInstance,
    pub rng: ChaCha8Rng,
}

impl EnvCopy {
    /// Copies are keyed by a global index so that any split of the same set
    /// of copies across learners sees identical streams.
    pub fn new(spec: EnvSpec, max_steps: usize, seed: u64, global_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(global_index + 1);
        EnvCopy {
            env: EnvInstance::new(spec, max_steps),
            rng,
        }
    }
}

pub fn sample_categorical(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

pub fn collect_rollout(model: &PolicyValueModel, params: &[f64], envs: &mut [EnvCopy], horizon: usize) -> Rollout {
    let w = envs.len();
    let mut r = Rollout {
        horizon,
        copies: w,
        states: Vec::with_capacity(w * horizon),
        actions: Vec::with_capacity(w * horizon),
        rewards: Vec::with_capacity(w * horizon),
        dones: Vec::with_capacity(w * horizon),
        bootstrap_states: Vec::with_capacity(w),
        episodes: Vec::new(),
    };
    for copy in envs.iter_mut() {
        for _ in 0..horizon {
            let s = copy.env.state();
            let p = softmax(&model.forward(params, s).logits);
            let a = sample_categorical(&p, &mut copy.rng);
            let step = copy.env.step(a);
            r.states.push(s);
            r.actions.push(a);
            r.rewards.push(step.reward);
            r.dones.push(step.done);
            if let Some((ret, len)) = step.finished_episode {
                r.episodes.push(Episode { ret, len });
            }
        }
        r.bootstrap_states.push(copy.env.state());
    }
    r
}

/// `G_t = r_t + gamma * G_{t+1}`, with `G_N = bootstrap` and the
/// continuation dropped after a done step.
pub fn n_step_returns(rewards: &[f64], dones: &[bool], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            acc = 0.0;
        }
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

pub fn advantages(returns: &[f64], values: &[f64]) -> Vec<f64> {
    returns.iter().zip(values).map(|(g, v)| g - v).collect()
}

/// Returns and advantages held fixed while differentiating the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

pub fn compute_targets(model: &PolicyValueModel, params: &[f64], rollout: &Rollout, cfg: &A2cConfig) -> Targets {
    let n = rollout.horizon;
    let mut returns = Vec::with_capacity(rollout.len());
    for c in 0..rollout.copies {
        let range = c * n..(c + 1) * n;
        let rewards: Vec<f64> = rollout.rewards[range.clone()]
            .iter()
            .map(|&r| if cfg.reward_clip { r.clamp(-1.0, 1.0) } else { r })
            .collect();
        let boot = model.forward(params, rollout.bootstrap_states[c]).value;
        returns.extend(n_step_returns(&rewards, &rollout.dones[range], cfg.gamma, boot));
    }
    let values: Vec<f64> = rollout.states.iter().map(|&s| model.forward(params, s).value).collect();
    let advantages = advantages(&returns, &values);
    Targets { returns, advantages }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub policy: f64,
    pub entropy: f64,
    pub value: f64,
    pub total: f64,
}

/// Scalar objective with targets held constant:
/// `mean(-A log pi(a|s) - eta H(pi(.|s))) + vf_coeff * 0.5 * mean((G - V)^2)`.
pub fn a2c_objective(model: &PolicyValueModel, params: &[f64], rollout: &Rollout, targets: &Targets, cfg: &A2cConfig) -> LossParts {
    let m = rollout.len() as f64;
    let mut parts = LossParts::default();
    for i in 0..rollout.len() {
        let f = model.forward(params, rollout.states[i]);
        let lp = log_softmax(&f.logits);
        parts.policy -= targets.advantages[i] * lp[rollout.actions[i]];
        parts.entropy += entropy(&f.logits);
        let err = targets.returns[i] - f.value;
        parts.value += 0.5 * err * err;
    }
    parts.policy /= m;
    parts.entropy /= m;
    parts.value /= m;
    parts.total = parts.policy - cfg.entropy_coeff * parts.entropy + cfg.vf_coeff * parts.value;
    parts
}

/// Analytic gradient of [`a2c_objective`] at `params`.
pub fn a2c_gradient(model: &PolicyValueModel, params: &[f64], rollout: &Rollout, targets: &Targets, cfg: &A2cConfig) -> Result<(Vec<f64>, LossParts)> {
    let m = rollout.len() as f64;
    let mut grad = vec![0.0; model.dim()];
    let mut parts = LossParts::default();
    let mut dlogits = vec![0.0; model.num_actions()];
    for i in 0..rollout.len() {
        let s = rollout.states[i];
        let a = rollout.actions[i];
        let f = model.forward(params, s);
        let lp = log_softmax(&f.logits);
        let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let h = -p.iter().zip(&lp).map(|(p, l)| p * l).sum::<f64>();
        let adv = targets.advantages[i];
        let err = targets.returns[i] - f.value;
        parts.policy -= adv * lp[a];
        parts.entropy += h;
        parts.value += 0.5 * err * err;
        for k in 0..dlogits.len() {
            let onehot = if k == a { 1.0 } else { 0.0 };
            let dpolicy = -adv * (onehot - p[k]);
            let dent = cfg.entropy_coeff * p[k] * (lp[k] + h);
            dlogits[k] = (dpolicy + dent) / m;
        }
        let dvalue = -cfg.vf_coeff * err / m;
        model.backward(params, s, &f, &dlogits, dvalue, &mut grad);
    }
    parts.policy /= m;
    parts.entropy /= m;
    parts.value /= m;
    parts.total = parts.policy - cfg.entropy_coeff * parts.entropy + cfg.vf_coeff * parts.value;
    if let Some(idx) = grad.iter().position(|g| !g.is_finite()) {
        return Err(GalaError::Numerical(format!(
            "non-finite gradient component {idx} (policy loss {}, value loss {})",
            parts.policy, parts.value
        )));
    }
    Ok((grad, parts))
}

pub struct A2cLearner {
    model: PolicyValueModel,
    cfg: A2cConfig,
    envs: Vec<EnvCopy>,
    optimizer: Optimizer,
}

impl A2cLearner {
    /// `first_copy` is the global index of this learner's first env copy.
    pub fn new(model: PolicyValueModel, cfg: A2cConfig, env: EnvSpec, seed: u64, first_copy: u64) -> Result<Self> {
        cfg.validate()?;
        env.validate()?;
        if model.num_states() != env.num_states() || model.num_actions() != env.num_actions() {
            return Err(GalaError::invalid("model shape does not match the environment"));
        }
        let cap = cfg.max_episode_steps.unwrap_or_else(|| env.default_episode_cap());
        let envs = (0..cfg.envs_per_learner as u64)
            .map(|w| EnvCopy::new(env, cap, seed, first_copy + w))
            .collect();
        let optimizer = Optimizer::new(cfg.optimizer, model.dim());
        Ok(A2cLearner {
            model,
            cfg,
            envs,
            optimizer,
        })
    }

    pub fn model(&self) -> &PolicyValueModel {
        &self.model
    }

    pub fn config(&self) -> &A2cConfig {
        &self.cfg
    }
}

impl Learner for A2cLearner {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn gradient(&mut self, params: &[f64]) -> Result<GradientSample> {
        let rollout = collect_rollout(&self.model, params, &mut self.envs, self.cfg.horizon);
        let targets = compute_targets(&self.model, params, &rollout, &self.cfg);
        let (grad, parts) = a2c_gradient(&self.model, params, &rollout, &targets, &self.cfg)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        Ok(GradientSample {
            grad,
            stats: UpdateStats {
                env_steps: rollout.len() as u64,
                episodes: rollout.episodes,
                entropy: parts.entropy,
                value_loss: parts.value,
                policy_loss: parts.policy,
                grad_norm,
            },
        })
    }

    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        let clipped = clip_global_norm(grad, self.cfg.clip_norm);
        self.optimizer.direction(&clipped)
    }
}
