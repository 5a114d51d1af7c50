//! Directed, possibly time-varying communication graphs and their
//! equal-neighbor mixing matrices.
//!
//! An edge `(j, i)` means agent `j` is an in-peer of agent `i`: messages flow
//! from `j` to `i`. Agents are indexed from zero. Time-varying graphs are
//! finite periodic schedules: iteration `k` uses phase `k % period`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GalaError, Result};

/// Row-sum tolerance for row-stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const STATIONARY_RESIDUAL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// Directed edge `from -> to`.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    n: usize,
    phases: Vec<BTreeSet<Edge>>,
}

impl TopologySpec {
    /// Builds a periodic topology; every phase is one graph of the schedule.
    pub fn new(n: usize, phases: Vec<Vec<Edge>>) -> Result<Self> {
        if n == 0 {
            return Err(GalaError::invalid("agent count must be positive"));
        }
        if phases.is_empty() {
            return Err(GalaError::invalid("topology needs at least one phase"));
        }
        let mut sets = Vec::with_capacity(phases.len());
        for (p, edges) in phases.into_iter().enumerate() {
            let mut set = BTreeSet::new();
            for (from, to) in edges {
                if from >= n || to >= n {
                    return Err(GalaError::invalid(format!(
                        "edge ({from}, {to}) in phase {p} references an agent outside 0..{n}"
                    )));
                }
                if from == to {
                    return Err(GalaError::invalid(format!(
                        "self-edge on agent {from} in phase {p}"
                    )));
                }
                set.insert((from, to));
            }
            sets.push(set);
        }
        Ok(TopologySpec { n, phases: sets })
    }

    /// Static topology with a single edge set.
    pub fn fixed(n: usize, edges: Vec<Edge>) -> Result<Self> {
        Self::new(n, vec![edges])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> usize {
        self.phases.len()
    }

    pub fn is_static(&self) -> bool {
        self.phases.len() == 1
    }

    pub fn edges_at(&self, k: u64) -> &BTreeSet<Edge> {
        &self.phases[(k % self.phases.len() as u64) as usize]
    }

    /// In-peers of `agent` at iteration `k`, ascending.
    pub fn in_peers(&self, k: u64, agent: usize) -> Vec<usize> {
        self.edges_at(k)
            .iter()
            .filter(|&&(_, to)| to == agent)
            .map(|&(from, _)| from)
            .collect()
    }

    /// Out-peers of `agent` at iteration `k`, ascending.
    pub fn out_peers(&self, k: u64, agent: usize) -> Vec<usize> {
        self.edges_at(k)
            .iter()
            .filter(|&&(from, _)| from == agent)
            .map(|&(_, to)| to)
            .collect()
    }
}

/// Directed 1-peer ring `0 -> 1 -> ... -> n-1 -> 0`.
pub fn build_ring(n: usize) -> Result<TopologySpec> {
    if n == 0 {
        return Err(GalaError::invalid("ring needs at least one agent"));
    }
    let edges = if n == 1 {
        Vec::new()
    } else {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    };
    TopologySpec::fixed(n, edges)
}

/// Every agent hears from every other agent.
pub fn build_full(n: usize) -> Result<TopologySpec> {
    if n == 0 {
        return Err(GalaError::invalid("topology needs at least one agent"));
    }
    let edges = (0..n)
        .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (j, i)))
        .collect();
    TopologySpec::fixed(n, edges)
}

/// Row-stochastic mixing matrix for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    iteration: u64,
}

impl MixingMatrix {
    /// Wraps an arbitrary square matrix after checking it is row-stochastic
    /// with a positive diagonal.
    pub fn new(entries: DMatrix<f64>, iteration: u64) -> Result<Self> {
        check_row_stochastic(&entries)?;
        if let Some(i) = (0..entries.nrows()).find(|&i| entries[(i, i)] <= 0.0) {
            return Err(GalaError::invalid(format!("self-weight p[{i},{i}] is not positive")));
        }
        Ok(MixingMatrix { entries, iteration })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }
}

pub(crate) fn check_row_stochastic(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(GalaError::invalid(format!(
            "mixing matrix must be square and nonempty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for (i, row) in m.row_iter().enumerate() {
        if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(GalaError::invalid(format!("row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(GalaError::invalid(format!("row {i} sums to {sum}, not 1")));
        }
    }
    Ok(())
}

/// `p[i][j] = 1 / (1 + |N_in(i)|)` for `j = i` and every in-peer `j`.
pub fn equal_neighbor_mixing(topo: &TopologySpec, k: u64) -> MixingMatrix {
    let n = topo.n();
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        let peers = topo.in_peers(k, i);
        let w = 1.0 / (1 + peers.len()) as f64;
        entries[(i, i)] = w;
        for j in peers {
            entries[(i, j)] = w;
        }
    }
    MixingMatrix {
        entries,
        iteration: k,
    }
}

/// True iff every column also sums to one within [`STOCHASTIC_TOL`].
pub fn is_doubly_stochastic(p: &MixingMatrix) -> bool {
    p.entries
        .column_iter()
        .all(|c| (c.sum() - 1.0).abs() <= STOCHASTIC_TOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pi: Vec<f64>,
}

impl StationaryDistribution {
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// `pi^T x` applied column-wise to an `n x d` matrix.
    pub fn weighted_limit(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let pi = DVector::from_column_slice(&self.pi);
        x.tr_mul(&pi)
    }
}

/// Left Perron vector of `P` by power iteration on `P^T`.
///
/// Rejects chains with more than one closed class (no unique limit) and
/// chains whose iteration does not settle (periodic).
pub fn stationary_distribution(p: &MixingMatrix) -> Result<StationaryDistribution> {
    let m = &p.entries;
    let n = m.nrows();
    let closed = closed_class_count(m);
    if closed != 1 {
        return Err(GalaError::Convergence(format!(
            "mixing matrix has {closed} closed classes; no unique ergodic limit"
        )));
    }
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..STATIONARY_MAX_ITERS {
        let mut next = m.tr_mul(&pi);
        let s = next.sum();
        next /= s;
        let residual = (&next - &pi).amax();
        pi = next;
        if residual <= STATIONARY_RESIDUAL {
            return Ok(StationaryDistribution {
                pi: pi.iter().map(|&v| v.max(0.0)).collect(),
            });
        }
    }
    Err(GalaError::Convergence(format!(
        "power iteration for the stationary distribution did not settle within {STATIONARY_MAX_ITERS} steps"
    )))
}

/// Number of strongly connected classes of the chain `i -> j` (`p[i][j] > 0`)
/// with no transitions leaving them.
fn closed_class_count(m: &DMatrix<f64>) -> usize {
    let n = m.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| m[(i, j)] > 0.0).collect())
        .collect();
    let reach: Vec<Vec<bool>> = (0..n).map(|s| reachable(&adj, s)).collect();
    // i's class is closed iff everything reachable from i can reach i back.
    let mut seen = vec![false; n];
    let mut count = 0;
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            seen[j] = true;
        }
        let closed = (0..n).all(|j| !reach[i][j] || reach[j][i]);
        if closed {
            count += 1;
        }
    }
    count
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// True iff the directed graph on `n` nodes with these edges is strongly
/// connected. A single node is strongly connected.
pub fn is_strongly_connected<'a>(n: usize, edges: impl IntoIterator<Item = &'a Edge>) -> bool {
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for &(a, b) in edges {
        fwd[a].push(b);
        rev[b].push(a);
    }
    reachable(&fwd, 0).into_iter().all(|r| r) && reachable(&rev, 0).into_iter().all(|r| r)
}

/// Smallest `B <= window` such that the union of every `B` consecutive edge
/// sets is strongly connected.
pub fn b_strong_connectivity(topo: &TopologySpec, window: usize) -> Option<usize> {
    if window == 0 {
        return None;
    }
    let period = topo.period();
    (1..=window).find(|&b| {
        (0..period as u64).all(|start| {
            let union: BTreeSet<Edge> = (start..start + b as u64)
                .flat_map(|k| topo.edges_at(k).iter().copied())
                .collect();
            is_strongly_connected(topo.n(), union.iter())
        })
    })
}
