//! Orchestration of one experiment across its seeds.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::artifacts::{write_bounds_csv, write_corr_csv, write_json, write_metrics_csv, write_params, write_protocol_log};
use super::config::{ExperimentConfig, InitConfig, LearnerConfig, Mode};
use super::report::success_rate;
use crate::engine::allreduce::run_allreduce;
use crate::engine::parallel::{run_parallel, ParallelSettings};
use crate::engine::sim::{simulate, IterationView, SimSettings, StopRule, UpdateRecord};
use crate::engine::{DelayModel, Tau};
use crate::error::{GalaError, Result};
use crate::learners::a2c::A2cLearner;
use crate::learners::env::EnvSpec;
use crate::learners::eval::{evaluate_policy, gradient_correlation, mean_off_diagonal, value_iteration, VALUE_ITERATION_TOL};
use crate::learners::model::PolicyValueModel;
use crate::learners::synthetic::{IdleLearner, SyntheticLearner};
use crate::learners::Learner;
use crate::spectral::{consensus_distance, trace_bounds, BoundTrace, TraceInputs};
use crate::topology::{b_strong_connectivity, equal_neighbor_mixing, stationary_distribution, TopologySpec};

/// Consensus threshold for gossip-only runs.
pub const CONSENSUS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSummary {
    /// Estimated from observed norms only (parallel mode); never asserted.
    pub estimated: bool,
    pub beta: f64,
    pub transient: f64,
    pub window: usize,
    pub beta_per_matrix: f64,
    pub history: usize,
    pub b: Option<usize>,
    pub l: f64,
    pub prop2_from: Option<u64>,
    /// Stationary bound at the last traced iteration.
    pub final_prop2: Option<f64>,
    pub max_ratio_geometric: f64,
    pub max_ratio_exact: f64,
    pub max_ratio_prop2: f64,
    pub violations_geometric: usize,
    pub violations_exact: usize,
    pub violations_prop2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct StalenessSummary {
    pub max_effective_delay: usize,
    pub violations: usize,
    pub max_since_at_step: u64,
    pub blocked_iterations: u64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub samples: usize,
    pub mean_off_diagonal: f64,
    pub neighbour_mean: Option<f64>,
    pub non_neighbour_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusSummary {
    pub final_distance: f64,
    /// Largest coordinate gap between any two agents at the end.
    pub final_spread: f64,
    pub max_deviation_from_initial_mean: f64,
    /// Against `sum_j pi_j x_j(0)` for static ergodic topologies.
    pub max_deviation_from_pi_limit: Option<f64>,
    pub consensus_achieved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mode: Mode,
    pub n: usize,
    pub tau: Tau,
    pub iterations: u64,
    pub env_steps: u64,
    /// Equals the number of data rows in metrics.csv.
    pub updates: usize,
    pub final_eval: Option<f64>,
    pub final_eval_stderr: Option<f64>,
    pub optimum: Option<f64>,
    pub steps_to_target: Option<u64>,
    pub eval_history: Vec<(u64, f64)>,
    pub bounds: Option<BoundSummary>,
    pub staleness: StalenessSummary,
    pub correlation: Option<CorrelationSummary>,
    pub consensus: ConsensusSummary,
    pub violations: usize,
    pub error: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub n: usize,
    pub tau: Tau,
    pub seeds: Vec<SeedSummary>,
    pub mean_final_eval: Option<f64>,
    pub stderr_final_eval: Option<f64>,
    pub reference_score: Option<f64>,
    pub success_rate: Option<f64>,
    pub total_violations: usize,
    pub passed: bool,
}

/// Learners, initial parameters and reference learning rate for one seed.
struct Setup {
    learners: Vec<Box<dyn Learner>>,
    init: Vec<Vec<f64>>,
    alpha: f64,
    a2c: Option<(PolicyValueModel, EnvSpec, f64, usize)>,
}

fn seed_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn build_setup(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Setup> {
    let uniform_init = |d: usize| -> Vec<Vec<f64>> {
        let mut rng = seed_stream(seed, 101);
        match cfg.init {
            InitConfig::Uniform { low, high } => (0..n).map(|_| (0..d).map(|_| rng.gen_range(low..high)).collect()).collect(),
            InitConfig::Identical => vec![vec![0.0; d]; n],
        }
    };
    if cfg.mode == Mode::GossipOnly {
        let d = cfg.dim.unwrap_or(1);
        return Ok(Setup {
            learners: (0..n).map(|_| Box::new(IdleLearner { dim: d }) as Box<dyn Learner>).collect(),
            init: uniform_init(d),
            alpha: 0.0,
            a2c: None,
        });
    }
    match &cfg.learner {
        LearnerConfig::Synthetic(s) => {
            let d = cfg.dim.unwrap_or(1);
            let mut rng = seed_stream(seed, 102);
            let mut learners: Vec<Box<dyn Learner>> = Vec::with_capacity(n);
            for i in 0..n {
                let c: Vec<f64> = (0..d).map(|_| s.center_scale * rng.sample::<f64, _>(StandardNormal)).collect();
                let noise_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                learners.push(Box::new(SyntheticLearner::new(c, s.noise, s.cap, noise_seed)?));
            }
            Ok(Setup {
                learners,
                init: uniform_init(d),
                alpha: s.lr,
                a2c: None,
            })
        }
        LearnerConfig::A2c(a) => {
            let env = cfg.env.ok_or_else(|| GalaError::config("env", "required for actor-critic learners"))?;
            let model = PolicyValueModel::new(a.model, env.num_states(), env.num_actions())?;
            let x0 = model.init(seed);
            let init = match cfg.init {
                InitConfig::Identical => vec![x0; n],
                InitConfig::Uniform { .. } => uniform_init(model.dim()),
            };
            let w = a.envs_per_learner as u64;
            let mut learners: Vec<Box<dyn Learner>> = Vec::with_capacity(n);
            for i in 0..n {
                learners.push(Box::new(A2cLearner::new(model.clone(), a.clone(), env, seed, i as u64 * w)?));
            }
            let cap = a.max_episode_steps.unwrap_or_else(|| env.default_episode_cap());
            Ok(Setup {
                learners,
                init,
                alpha: a.effective_lr(n),
                a2c: Some((model, env, a.gamma, cap)),
            })
        }
    }
}

/// Periodic greedy evaluation of every agent plus gradient-correlation sampling.
struct Monitor<'a> {
    cfg: &'a ExperimentConfig,
    a2c: Option<&'a (PolicyValueModel, EnvSpec, f64, usize)>,
    optimum: Option<f64>,
    next_eval: u64,
    next_corr: u64,
    eval_history: Vec<(u64, f64)>,
    steps_to_target: Option<u64>,
    corr: Vec<(u64, DMatrix<f64>)>,
}

impl<'a> Monitor<'a> {
    fn new(cfg: &'a ExperimentConfig, a2c: Option<&'a (PolicyValueModel, EnvSpec, f64, usize)>, optimum: Option<f64>) -> Self {
        Monitor {
            cfg,
            a2c,
            optimum,
            next_eval: if cfg.eval.interval > 0 { cfg.eval.interval } else { u64::MAX },
            next_corr: if cfg.corr_stride > 0 { cfg.corr_stride } else { u64::MAX },
            eval_history: Vec::new(),
            steps_to_target: None,
            corr: Vec::new(),
        }
    }

    fn evaluate(&self, params: &[&[f64]]) -> Result<(f64, f64)> {
        let (model, env, gamma, cap) = self.a2c.expect("evaluation needs an actor-critic setup");
        let mut means = Vec::with_capacity(params.len());
        let mut errs = Vec::with_capacity(params.len());
        for p in params {
            let r = evaluate_policy(model, p, env, self.cfg.eval.episodes, *gamma, *cap)?;
            means.push(r.mean);
            errs.push(r.stderr);
        }
        let m = means.len() as f64;
        Ok((means.iter().sum::<f64>() / m, errs.iter().sum::<f64>() / m))
    }

    fn record_eval(&mut self, step: u64, value: f64) {
        self.eval_history.push((step, value));
        if self.steps_to_target.is_none() {
            if let Some(opt) = self.optimum {
                if value >= self.cfg.eval.target_fraction * opt {
                    self.steps_to_target = Some(step);
                }
            }
        }
    }

    fn observe(&mut self, view: &IterationView<'_>) -> Result<()> {
        let clock = if self.a2c.is_some() { view.env_steps } else { view.k };
        if self.a2c.is_some() && clock >= self.next_eval {
            let params: Vec<&[f64]> = view.agents.iter().map(|a| a.params.as_slice()).collect();
            let (mean, _) = self.evaluate(&params)?;
            self.record_eval(clock, mean);
            while self.next_eval <= clock {
                self.next_eval = self.next_eval.saturating_add(self.cfg.eval.interval);
            }
        }
        if clock >= self.next_corr {
            if view.last_grads.iter().all(Option::is_some) && view.last_grads.len() > 1 {
                let grads: Vec<Vec<f64>> = view.last_grads.iter().map(|g| g.clone().expect("checked")).collect();
                self.corr.push((clock, gradient_correlation(&grads)?));
            }
            while self.next_corr <= clock {
                self.next_corr = self.next_corr.saturating_add(self.cfg.corr_stride);
            }
        }
        Ok(())
    }

    fn correlation_summary(&self, topo: Option<&TopologySpec>) -> Option<CorrelationSummary> {
        let until = self.cfg.corr_until.unwrap_or(u64::MAX);
        let used: Vec<&DMatrix<f64>> = self.corr.iter().filter(|(s, _)| *s <= until).map(|(_, c)| c).collect();
        if used.is_empty() {
            return None;
        }
        let mean = used.iter().map(|c| mean_off_diagonal(c)).sum::<f64>() / used.len() as f64;
        let (mut nb, mut nnb) = ((0.0, 0usize), (0.0, 0usize));
        if let Some(t) = topo {
            let n = t.n();
            let edges = t.edges_at(0);
            for c in &used {
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        if edges.contains(&(i, j)) || edges.contains(&(j, i)) {
                            nb.0 += c[(i, j)];
                            nb.1 += 1;
                        } else {
                            nnb.0 += c[(i, j)];
                            nnb.1 += 1;
                        }
                    }
                }
            }
        }
        let avg = |p: (f64, usize)| (p.1 > 0).then(|| p.0 / p.1 as f64);
        Some(CorrelationSummary {
            samples: used.len(),
            mean_off_diagonal: mean,
            neighbour_mean: avg(nb),
            non_neighbour_mean: avg(nnb),
        })
    }
}

fn consensus_summary(init: &[Vec<f64>], fin: &[Vec<f64>], topo: Option<&TopologySpec>) -> ConsensusSummary {
    let n = init.len();
    let d = init[0].len();
    let mean0: Vec<f64> = (0..d).map(|c| init.iter().map(|x| x[c]).sum::<f64>() / n as f64).collect();
    let dev_mean = fin
        .iter()
        .flat_map(|x| x.iter().zip(&mean0).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let mut spread: f64 = 0.0;
    for c in 0..d {
        let (lo, hi) = fin.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[c]), hi.max(x[c])));
        spread = spread.max(hi - lo);
    }
    let pi_dev = topo.filter(|t| t.is_static()).and_then(|t| {
        let pi = stationary_distribution(&equal_neighbor_mixing(t, 0)).ok()?;
        let x0 = DMatrix::from_fn(n, d, |i, c| init[i][c]);
        let limit = pi.weighted_limit(&x0);
        Some(
            fin.iter()
                .flat_map(|x| x.iter().enumerate().map(|(c, v)| (v - limit[c]).abs()).collect::<Vec<_>>())
                .fold(0.0, f64::max),
        )
    });
    let xf = DMatrix::from_fn(n, d, |i, c| fin[i][c]);
    ConsensusSummary {
        final_distance: consensus_distance(&xf),
        final_spread: spread,
        max_deviation_from_initial_mean: dev_mean,
        max_deviation_from_pi_limit: pi_dev,
        consensus_achieved: spread <= CONSENSUS_TOL,
    }
}

fn bound_summary(trace: &BoundTrace, estimated: bool, history: usize) -> BoundSummary {
    let v = trace.violations();
    BoundSummary {
        estimated,
        beta: trace.certificate.beta,
        transient: trace.certificate.transient,
        window: trace.certificate.window,
        beta_per_matrix: trace.beta_per_matrix,
        history,
        b: trace.b,
        l: trace.l,
        prop2_from: trace.prop2_from,
        final_prop2: trace.rows.last().map(|r| r.bound_prop2).filter(|v| v.is_finite()),
        max_ratio_geometric: v.max_ratio_geometric,
        max_ratio_exact: v.max_ratio_exact,
        max_ratio_prop2: v.max_ratio_prop2,
        violations_geometric: if estimated { 0 } else { v.geometric },
        violations_exact: if estimated { 0 } else { v.exact },
        violations_prop2: if estimated { 0 } else { v.prop2 },
    }
}

/// Smallest B over a window of four periods (`None` if never connected).
fn connectivity(topo: &TopologySpec) -> Option<usize> {
    b_strong_connectivity(topo, 4 * topo.period())
}

struct ModeResult {
    final_params: Vec<Vec<f64>>,
    iterations: u64,
    env_steps: u64,
    updates: Vec<UpdateRecord>,
    bounds: Option<(BoundTrace, BoundSummary)>,
    staleness: StalenessSummary,
}

fn run_sim(cfg: &ExperimentConfig, topo: &TopologySpec, setup: &mut Setup, seed: u64, monitor: &mut Monitor<'_>, dir: &Path) -> Result<ModeResult> {
    let stop = if cfg.is_a2c() { StopRule::EnvSteps(cfg.total_steps) } else { StopRule::Iterations(cfg.total_steps) };
    let settings = SimSettings {
        topology: topo.clone(),
        tau: cfg.tau,
        delay: DelayModel::new(cfg.delay.clone(), cfg.tau)?,
        activation: cfg.activation.clone(),
        alpha: setup.alpha,
        stop,
        seed,
        record_trace: cfg.bounds.enabled,
        log_protocol: cfg.log_protocol.unwrap_or(true),
        max_iterations: cfg.total_steps.saturating_mul(16).max(1_000_000),
    };
    let mut hook = |v: &IterationView<'_>| monitor.observe(v);
    let out = simulate(&settings, &mut setup.learners, &setup.init, Some(&mut hook))?;
    if settings.log_protocol {
        write_protocol_log(&dir.join("protocol.log"), &out.protocol)?;
    }
    let history = out.history(cfg.tau);
    let bounds = match out.trace.as_ref() {
        Some(t) if !t.updates.is_empty() => {
            let mats = t.augmented(history)?;
            let b = connectivity(topo);
            let window = cfg.bounds.beta_window.unwrap_or(8 * (history + b.unwrap_or(topo.period()) + 1));
            let inputs = TraceInputs {
                mixing: &mats,
                updates: &t.updates,
                states: &t.states,
                alpha: settings.alpha,
                tau: if cfg.bounds.prop2 { cfg.tau.finite().map(|_| history) } else { None },
                b,
                window,
                exact: cfg.bounds.exact,
                stride: cfg.bounds.stride,
            };
            let trace = trace_bounds(&inputs)?;
            let summary = bound_summary(&trace, false, history);
            Some((trace, summary))
        }
        _ => None,
    };
    Ok(ModeResult {
        final_params: out.final_params,
        iterations: out.iterations,
        env_steps: out.env_steps,
        updates: out.updates,
        bounds,
        staleness: StalenessSummary {
            max_effective_delay: out.max_effective_delay,
            violations: out.staleness_violations,
            max_since_at_step: out.max_since_at_step,
            blocked_iterations: out.blocked_iterations,
            messages_sent: out.messages_sent,
            messages_dropped: out.messages_dropped,
        },
    })
}

fn run_ar(cfg: &ExperimentConfig, setup: &mut Setup, monitor: &mut Monitor<'_>) -> Result<ModeResult> {
    let stop = if cfg.is_a2c() { StopRule::EnvSteps(cfg.total_steps) } else { StopRule::Iterations(cfg.total_steps) };
    let n = setup.learners.len();
    let mut hook = |v: &IterationView<'_>| monitor.observe(v);
    let out = run_allreduce(&mut setup.learners, &setup.init[0], setup.alpha, stop, false, Some(&mut hook))?;
    Ok(ModeResult {
        final_params: vec![out.final_params; n],
        iterations: out.iterations,
        env_steps: out.env_steps,
        updates: out.updates,
        bounds: None,
        staleness: StalenessSummary::default(),
    })
}

fn run_par(cfg: &ExperimentConfig, topo: &TopologySpec, setup: &mut Setup) -> Result<ModeResult> {
    let n = topo.n();
    let steps = match &cfg.learner {
        LearnerConfig::A2c(a) if cfg.is_a2c() => {
            let per_update = (a.horizon * a.envs_per_learner * n) as u64;
            cfg.total_steps.div_ceil(per_update)
        }
        _ => cfg.total_steps,
    };
    let settings = ParallelSettings {
        topology: topo.clone(),
        tau: cfg.tau,
        alpha: setup.alpha,
        steps_per_agent: steps,
        observe_stride: cfg.bounds.stride as u64,
        timeout: Duration::from_secs(10),
    };
    let out = run_parallel(&settings, &mut setup.learners, &setup.init)?;
    let env_steps = out.updates.iter().map(|u| u.stats.env_steps).sum();
    Ok(ModeResult {
        final_params: out.final_params,
        iterations: steps,
        env_steps,
        updates: out.updates,
        bounds: None,
        staleness: StalenessSummary {
            max_since_at_step: out.max_since_at_step,
            ..StalenessSummary::default()
        },
    })
}

/// Runs one seed and writes its artifacts into `dir`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<SeedSummary> {
    let started = Instant::now();
    let topo = cfg.topology.build()?;
    let n = topo.n();
    let mut setup = build_setup(cfg, n, seed)?;
    let a2c = setup.a2c.clone();
    let optimum = match &a2c {
        Some((_, env, gamma, _)) => Some(value_iteration(env, *gamma, VALUE_ITERATION_TOL)?[env.start()]),
        None => None,
    };
    let mut monitor = Monitor::new(cfg, a2c.as_ref(), optimum);

    let result = match cfg.mode {
        Mode::GalaSim | Mode::GossipOnly => run_sim(cfg, &topo, &mut setup, seed, &mut monitor, dir),
        Mode::Allreduce => run_ar(cfg, &mut setup, &mut monitor),
        Mode::GalaParallel => run_par(cfg, &topo, &mut setup),
    };

    let res = match result {
        Ok(r) => r,
        Err(e @ (GalaError::Protocol(_) | GalaError::Consistency(_) | GalaError::Numerical(_) | GalaError::Worker(_))) => {
            log::error!("seed {seed}: {e}");
            let summary = SeedSummary {
                seed,
                mode: cfg.mode,
                n,
                tau: cfg.tau,
                iterations: 0,
                env_steps: 0,
                updates: 0,
                final_eval: None,
                final_eval_stderr: None,
                optimum,
                steps_to_target: None,
                eval_history: Vec::new(),
                bounds: None,
                staleness: StalenessSummary::default(),
                correlation: None,
                consensus: consensus_summary(&setup.init, &setup.init, None),
                violations: 1,
                error: Some(e.to_string()),
                passed: false,
            };
            write_json(&dir.join("summary.json"), &summary)?;
            return Ok(summary);
        }
        Err(e) => return Err(e),
    };

    let (final_eval, final_stderr) = if a2c.is_some() {
        let params: Vec<&[f64]> = res.final_params.iter().map(Vec::as_slice).collect();
        let (m, s) = monitor.evaluate(&params)?;
        monitor.record_eval(res.env_steps, m);
        (Some(m), Some(s))
    } else {
        (None, None)
    };

    write_metrics_csv(&dir.join("metrics.csv"), &res.updates)?;
    write_corr_csv(&dir.join("corr.csv"), n, &monitor.corr)?;
    write_params(&dir.join("final_params.bin"), &res.final_params)?;
    if let Some((trace, _)) = &res.bounds {
        write_bounds_csv(&dir.join("bounds.csv"), &trace.rows, trace.prop2_from)?;
    }

    let bounds = res.bounds.map(|(_, s)| s);
    let bound_violations = bounds
        .as_ref()
        .map_or(0, |b| b.violations_geometric + b.violations_exact + b.violations_prop2);
    let violations = bound_violations + res.staleness.violations;
    let topo_ref = (cfg.mode != Mode::Allreduce).then_some(&topo);
    let summary = SeedSummary {
        seed,
        mode: cfg.mode,
        n,
        tau: cfg.tau,
        iterations: res.iterations,
        env_steps: res.env_steps,
        updates: res.updates.len(),
        final_eval,
        final_eval_stderr: final_stderr,
        optimum,
        steps_to_target: monitor.steps_to_target,
        eval_history: monitor.eval_history.clone(),
        bounds,
        staleness: res.staleness,
        correlation: monitor.correlation_summary(topo_ref),
        consensus: consensus_summary(&setup.init, &res.final_params, topo_ref),
        violations,
        error: None,
        passed: violations == 0,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "seed": seed, "wall_time_s": started.elapsed().as_secs_f64() }),
    )?;
    Ok(summary)
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

/// Runs every seed (concurrently, each isolated in its own directory) and
/// writes the aggregate summary.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let root = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfg.seeds.len()).max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<Result<SeedSummary>>> = (0..cfg.seeds.len()).map(|_| None).collect();
    let slots: Vec<std::sync::Mutex<Option<Result<SeedSummary>>>> = (0..cfg.seeds.len()).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= cfg.seeds.len() {
                    break;
                }
                let seed = cfg.seeds[i];
                let r = run_seed(cfg, seed, &seed_dir(&root, seed));
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    for (r, slot) in results.iter_mut().zip(slots) {
        *r = slot.into_inner().expect("slot lock");
    }
    let mut seeds = Vec::with_capacity(results.len());
    for r in results {
        seeds.push(r.expect("every seed ran")?);
    }
    let summary = aggregate(cfg, seeds)?;
    write_json(&root.join("summary.json"), &summary)?;
    Ok(summary)
}

fn aggregate(cfg: &ExperimentConfig, seeds: Vec<SeedSummary>) -> Result<RunSummary> {
    let n = cfg.topology.build()?.n();
    let scores: Vec<f64> = seeds.iter().filter_map(|s| s.final_eval).collect();
    let (mean, stderr) = if scores.is_empty() {
        (None, None)
    } else {
        let m = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / m;
        let se = if scores.len() > 1 {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            0.0
        };
        (Some(mean), Some(se))
    };
    let reference = cfg.reference_score.or_else(|| seeds.iter().find_map(|s| s.optimum));
    let rate = match (reference, scores.is_empty()) {
        (Some(r), false) => {
            // Failed seeds count as unsuccessful runs.
            let mut all = scores.clone();
            all.extend(seeds.iter().filter(|s| s.final_eval.is_none()).map(|_| f64::NEG_INFINITY));
            Some(success_rate(&all, r, cfg.success_threshold)?)
        }
        _ => None,
    };
    let total_violations = seeds.iter().map(|s| s.violations).sum();
    Ok(RunSummary {
        mode: cfg.mode,
        n,
        tau: cfg.tau,
        passed: total_violations == 0,
        seeds,
        mean_final_eval: mean,
        stderr_final_eval: stderr,
        reference_score: reference,
        success_rate: rate,
        total_violations,
    })
}
