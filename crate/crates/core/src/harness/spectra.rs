//! Spectral summary of a configured topology.

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::engine::Tau;
use crate::error::Result;
use crate::spectral::{augment, certify_geometric, estimate_beta, prop2_bound, AugmentedMixing, BetaMode, EdgeDelays};
use crate::topology::{b_strong_connectivity, equal_neighbor_mixing, is_doubly_stochastic, stationary_distribution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub phase: usize,
    pub doubly_stochastic: bool,
    pub pi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaReport {
    /// Delay applied on every edge.
    pub delay: usize,
    pub per_matrix: f64,
    pub windowed: f64,
    pub window: usize,
    pub transient: f64,
    /// Stationary radius per unit `alpha * L`, when `beta < 1`.
    pub prop2_unit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectraReport {
    pub n: usize,
    pub period: usize,
    pub b: Option<usize>,
    pub phases: Vec<PhaseReport>,
    pub beta: Vec<BetaReport>,
}

fn constant_delay_sequence(cfg: &ExperimentConfig, tau: usize, delay: usize, len: usize) -> Result<Vec<AugmentedMixing>> {
    let topo = cfg.topology.build()?;
    (0..len as u64)
        .map(|k| {
            let p = equal_neighbor_mixing(&topo, k);
            let delays: EdgeDelays = topo.edges_at(k).iter().map(|&e| (e, delay)).collect();
            augment(&p, &delays, tau)
        })
        .collect()
}

/// Doubly-stochastic check and stationary distribution per phase, plus beta
/// estimates for zero delay and (for finite tau) a constant delay of tau.
pub fn spectra(cfg: &ExperimentConfig) -> Result<SpectraReport> {
    let topo = cfg.topology.build()?;
    let period = topo.period();
    let b = b_strong_connectivity(&topo, 4 * period);
    let phases = (0..period)
        .map(|k| {
            let p = equal_neighbor_mixing(&topo, k as u64);
            PhaseReport {
                phase: k,
                doubly_stochastic: is_doubly_stochastic(&p),
                pi: stationary_distribution(&p).ok().map(|s| s.pi().to_vec()),
            }
        })
        .collect();
    let tau = cfg.tau.finite().unwrap_or(0);
    let mut delays = vec![0];
    if tau > 0 {
        delays.push(tau);
    }
    let mut beta = Vec::new();
    for d in delays {
        let window = 8 * (tau + b.unwrap_or(period) + 1);
        let seq = constant_delay_sequence(cfg, tau, d, 4 * window)?;
        let cert = certify_geometric(&seq, window)?;
        let prop2_unit = match (b, cfg.tau) {
            (Some(b), Tau::Finite(t)) if cert.beta < 1.0 => prop2_bound(1.0, cert.beta, t, b, 1.0).ok(),
            _ => None,
        };
        beta.push(BetaReport {
            delay: d,
            per_matrix: estimate_beta(&seq, BetaMode::PerMatrix)?,
            windowed: cert.beta,
            window: cert.window,
            transient: cert.transient,
            prop2_unit,
        });
    }
    Ok(SpectraReport {
        n: topo.n(),
        period,
        b,
        phases,
        beta,
    })
}
