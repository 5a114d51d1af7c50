//! Grid sweeps over learner count, mode and tau.

use std::path::Path;

use serde::Serialize;

use super::artifacts::{fmt_sig, write_atomic, write_json};
use super::config::{ExperimentConfig, Mode, TopologyKind};
use super::run::{run_experiment, RunSummary};
use crate::engine::Tau;
use crate::error::{GalaError, Result};

pub const SWEEP_HEADER: [&str; 10] = [
    "learners",
    "mode",
    "tau",
    "seeds",
    "success_rate",
    "mean_final_eval",
    "stderr_final_eval",
    "prop2_bound",
    "violations",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub learners: usize,
    pub mode: Mode,
    pub tau: Tau,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

impl SweepCell {
    /// Mean over seeds of the stationary bound at the last traced iteration.
    pub fn prop2_bound(&self) -> Option<f64> {
        let s = self.summary.as_ref()?;
        let vals: Vec<f64> = s
            .seeds
            .iter()
            .filter_map(|x| x.bounds.as_ref().and_then(|b| b.final_prop2))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn failed(&self) -> bool {
        self.error.is_some() || self.summary.as_ref().is_some_and(|s| !s.passed)
    }
}

fn tau_label(t: Tau) -> String {
    match t {
        Tau::Finite(v) => v.to_string(),
        Tau::Infinite => "inf".into(),
    }
}

fn cell_config(base: &ExperimentConfig, learners: usize, mode: Mode, tau: Tau, root: &Path) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    if learners != cfg.topology.n {
        if cfg.topology.kind == TopologyKind::Custom {
            return Err(GalaError::config("sweep.learners", "a custom topology has a fixed agent count"));
        }
        cfg.topology.n = learners;
    }
    cfg.mode = mode;
    cfg.tau = tau;
    cfg.sweep = None;
    cfg.output_dir = root.join(format!("n{learners}_{}_tau{}", mode.as_str(), tau_label(tau)));
    Ok(cfg)
}

/// Runs every cell; a failing cell is recorded and the sweep moves on.
pub fn sweep(base: &ExperimentConfig, root: Option<&Path>) -> Result<Vec<SweepCell>> {
    let grid = base.sweep.clone().unwrap_or(super::config::SweepConfig {
        learners: Vec::new(),
        modes: Vec::new(),
        tau: Vec::new(),
    });
    let learners = if grid.learners.is_empty() { vec![base.topology.n] } else { grid.learners };
    let modes = if grid.modes.is_empty() { vec![base.mode] } else { grid.modes };
    let taus = if grid.tau.is_empty() { vec![base.tau] } else { grid.tau };
    let root = root.map(Path::to_path_buf).unwrap_or_else(|| base.output_dir.clone());

    let mut cells = Vec::with_capacity(learners.len() * modes.len() * taus.len());
    for &n in &learners {
        for &mode in &modes {
            for &tau in &taus {
                let outcome = cell_config(base, n, mode, tau, &root).and_then(|cfg| run_experiment(&cfg, None));
                let (summary, error) = match outcome {
                    Ok(s) => (Some(s), None),
                    Err(e) => {
                        log::error!("sweep cell n={n} mode={} tau={}: {e}", mode.as_str(), tau_label(tau));
                        (None, Some(e.to_string()))
                    }
                };
                cells.push(SweepCell {
                    learners: n,
                    mode,
                    tau,
                    summary,
                    error,
                });
            }
        }
    }
    write_sweep_csv(&root.join("sweep.csv"), &cells)?;
    write_json(&root.join("sweep.json"), &cells)?;
    Ok(cells)
}

pub fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let err = |e: csv::Error| GalaError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        w.write_record(SWEEP_HEADER).map_err(err)?;
        for c in cells {
            let s = c.summary.as_ref();
            w.write_record([
                c.learners.to_string(),
                c.mode.as_str().to_string(),
                tau_label(c.tau),
                s.map_or(0, |s| s.seeds.len()).to_string(),
                opt(s.and_then(|s| s.success_rate)),
                opt(s.and_then(|s| s.mean_final_eval)),
                opt(s.and_then(|s| s.stderr_final_eval)),
                opt(c.prop2_bound()),
                s.map_or(String::new(), |s| s.total_violations.to_string()),
                c.error.clone().unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| GalaError::io(path, e))?;
    }
    write_atomic(path, &buf)
}
