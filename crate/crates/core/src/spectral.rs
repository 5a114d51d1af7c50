//! Delay-augmented mixing matrices, contraction estimates and the explicit
//! epsilon-ball bounds on distance from consensus.
//!
//! Augmented node layout: index `j` is agent `j`'s live parameters; index
//! `lag * n + j` (for `lag` in `1..=tau`) holds the snapshot agent `j`
//! produced `lag` iterations ago. A message consumed with effective delay
//! `delta` reads column `delta * n + j` (or `j` itself when `delta = 0`).
//!
//! Norms are Frobenius for parameter matrices and spectral for operators.
//! The projected operator `Q M Q^T` shares its singular values with the
//! column-centred matrix `(I - 11^T/n) M` whenever `M` is row-stochastic,
//! which is what the hot paths use.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{GalaError, Result};
use crate::linalg::{center_rows, centered_frobenius, spectral_norm, spectral_norm_warm};
use crate::topology::{check_row_stochastic, Edge, MixingMatrix};

/// Mixing inputs of one real agent during one iteration: `None` keeps the
/// agent's own value, `Some(inputs)` averages it with `(sender, delay)`
/// snapshots using equal weights.
pub type MixRow = Option<Vec<(usize, usize)>>;

/// Per-edge delay assignment; edges not listed have delay zero.
pub type EdgeDelays = BTreeMap<Edge, usize>;

#[inline]
fn node(n: usize, agent: usize, lag: usize) -> usize {
    lag * n + agent
}

/// Sparse row-stochastic matrix over `n (tau + 1)` augmented nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMixing {
    n: usize,
    tau: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl AugmentedMixing {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.n * (self.tau + 1)
    }

    /// Builds the augmented matrix from per-agent mixing decisions.
    pub fn from_mix_rows(n: usize, tau: usize, mix: &[MixRow]) -> Result<Self> {
        if mix.len() != n {
            return Err(GalaError::invalid(format!(
                "expected {n} mixing rows, got {}",
                mix.len()
            )));
        }
        let mut rows = Vec::with_capacity(n * (tau + 1));
        for (i, row) in mix.iter().enumerate() {
            match row {
                None => rows.push(vec![(i, 1.0)]),
                Some(inputs) => {
                    let w = 1.0 / (1 + inputs.len()) as f64;
                    let mut r = vec![(i, w)];
                    for &(sender, delay) in inputs {
                        if sender >= n {
                            return Err(GalaError::invalid(format!("unknown sender {sender}")));
                        }
                        if delay > tau {
                            return Err(GalaError::invalid(format!(
                                "delay {delay} on edge ({sender}, {i}) exceeds tau = {tau}"
                            )));
                        }
                        r.push((node(n, sender, delay), w));
                    }
                    rows.push(r);
                }
            }
        }
        Self::push_virtual_rows(n, tau, &mut rows);
        Ok(AugmentedMixing { n, tau, rows })
    }

    fn push_virtual_rows(n: usize, tau: usize, rows: &mut Vec<Vec<(usize, f64)>>) {
        for lag in 1..=tau {
            for j in 0..n {
                rows.push(vec![(node(n, j, lag - 1), 1.0)]);
            }
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                m[(r, c)] += w;
            }
        }
        m
    }

    /// `P~ Y` for a dense `Y` with `dim()` rows.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), y.ncols());
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                for col in 0..y.ncols() {
                    out[(r, col)] += w * y[(c, col)];
                }
            }
        }
        out
    }
}

/// Augments a general mixing matrix with `tau` virtual nodes per agent; the
/// off-diagonal weight `p[i][j]` is routed through `delays[(j, i)]` hops.
pub fn augment(p: &MixingMatrix, delays: &EdgeDelays, tau: usize) -> Result<AugmentedMixing> {
    let n = p.n();
    for (&(j, i), &d) in delays {
        if d > tau {
            return Err(GalaError::invalid(format!(
                "delay {d} on edge ({j}, {i}) exceeds tau = {tau}"
            )));
        }
    }
    let m = p.entries();
    let mut rows = Vec::with_capacity(n * (tau + 1));
    for i in 0..n {
        let mut r = Vec::new();
        for j in 0..n {
            let w = m[(i, j)];
            if w == 0.0 {
                continue;
            }
            let lag = if i == j {
                0
            } else {
                delays.get(&(j, i)).copied().unwrap_or(0)
            };
            r.push((node(n, j, lag), w));
        }
        rows.push(r);
    }
    AugmentedMixing::push_virtual_rows(n, tau, &mut rows);
    Ok(AugmentedMixing { n, tau, rows })
}

/// Orthonormal rows spanning the complement of the all-ones vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    rows: DMatrix<f64>,
}

impl ProjectionBasis {
    /// Gram-Schmidt of the coordinate axes against `1` and each other.
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(GalaError::invalid("projection basis needs dimension >= 2"));
        }
        let ones = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
        let mut basis: Vec<DVector<f64>> = vec![ones];
        for axis in 0..dim {
            let mut v = DVector::zeros(dim);
            v[axis] = 1.0;
            // Two passes keep the rows orthonormal to machine precision.
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&v);
                    v.axpy(-c, b, 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-8 {
                basis.push(v / norm);
            }
            if basis.len() == dim {
                break;
            }
        }
        let rows = DMatrix::from_fn(dim - 1, dim, |r, c| basis[r + 1][c]);
        Ok(ProjectionBasis { rows })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// Largest singular value of `Q M Q^T`.
pub fn projected_sigma(product: &DMatrix<f64>, q: &ProjectionBasis) -> Result<f64> {
    let dim = q.dim();
    if product.nrows() != dim || product.ncols() != dim {
        return Err(GalaError::invalid(format!(
            "product is {}x{}, basis expects {dim}x{dim}",
            product.nrows(),
            product.ncols()
        )));
    }
    let reduced = q.rows() * product * q.rows().transpose();
    Ok(spectral_norm(&reduced))
}

/// `||Q M Q^T||_2` for a row-stochastic `M`, via column centring.
fn projected_norm_stochastic(m: &DMatrix<f64>, warm: &mut DVector<f64>) -> f64 {
    spectral_norm_warm(&center_rows(m), warm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaMode {
    /// `sup_k sigma(P~'(k))`.
    PerMatrix,
    /// `sup_s ||P~'(s+w-1) ... P~'(s)||^(1/w)` over windows of length `w`.
    Windowed { window: usize },
}

fn check_sequence(seq: &[AugmentedMixing]) -> Result<usize> {
    let first = seq
        .first()
        .ok_or_else(|| GalaError::invalid("beta needs a nonempty matrix sequence"))?;
    let dim = first.dim();
    if seq.iter().any(|m| m.dim() != dim) {
        return Err(GalaError::invalid("augmented matrices differ in dimension"));
    }
    Ok(dim)
}

pub fn estimate_beta(seq: &[AugmentedMixing], mode: BetaMode) -> Result<f64> {
    let dim = check_sequence(seq)?;
    if dim < 2 {
        return Ok(0.0);
    }
    let mut warm = DVector::zeros(0);
    match mode {
        BetaMode::PerMatrix => Ok(seq
            .iter()
            .map(|m| projected_norm_stochastic(&m.dense(), &mut warm))
            .fold(0.0, f64::max)),
        BetaMode::Windowed { window } => {
            if window == 0 {
                return Err(GalaError::invalid("window must be positive"));
            }
            let w = window.min(seq.len());
            let mut best: f64 = 0.0;
            for s in 0..=seq.len() - w {
                let mut prod = seq[s].dense();
                for m in &seq[s + 1..s + w] {
                    prod = m.apply(&prod);
                }
                let norm = projected_norm_stochastic(&prod, &mut warm);
                best = best.max(norm.powf(1.0 / w as f64));
            }
            Ok(best)
        }
    }
}

/// A pair `(beta, transient)` such that every product of `l` consecutive
/// matrices of the recorded sequence satisfies
/// `||P~'(s+l-1) ... P~'(s)|| <= transient * beta^l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricCertificate {
    pub beta: f64,
    pub transient: f64,
    pub window: usize,
}

/// Certifies a geometric contraction rate from windows of length `window`.
///
/// `beta` is the window-normalised sup over all windows of exactly that
/// length; any longer product splits into full windows plus one shorter
/// remainder, whose worst observed norm relative to `beta^r` gives the
/// transient constant (never below one).
pub fn certify_geometric(seq: &[AugmentedMixing], window: usize) -> Result<GeometricCertificate> {
    let dim = check_sequence(seq)?;
    if window == 0 {
        return Err(GalaError::invalid("window must be positive"));
    }
    if dim < 2 {
        return Ok(GeometricCertificate {
            beta: 0.0,
            transient: 1.0,
            window,
        });
    }
    let w = window.min(seq.len());
    // short[r - 1] = sup over starts of the norm of length-r products, r < w.
    let mut short = vec![0.0f64; w.saturating_sub(1)];
    let mut full: f64 = 0.0;
    let mut warm = DVector::zeros(0);
    for s in 0..seq.len() {
        let len = w.min(seq.len() - s);
        let mut prod = seq[s].dense();
        for r in 1..=len {
            if r > 1 {
                prod = seq[s + r - 1].apply(&prod);
            }
            let norm = projected_norm_stochastic(&prod, &mut warm);
            if r < w {
                short[r - 1] = short[r - 1].max(norm);
            } else {
                full = full.max(norm);
            }
        }
    }
    let mut beta = full.powf(1.0 / w as f64);
    let mut transient: f64 = 1.0;
    if beta <= f64::MIN_POSITIVE {
        // Every full window collapses to consensus: only short products matter.
        beta = short
            .iter()
            .enumerate()
            .map(|(i, &c)| c.powf(1.0 / (i + 1) as f64))
            .fold(0.0, f64::max);
    } else {
        for (i, &c) in short.iter().enumerate() {
            transient = transient.max(c / beta.powi(i as i32 + 1));
        }
    }
    Ok(GeometricCertificate {
        beta,
        transient,
        window: w,
    })
}

/// `alpha * sum_{s=0}^{k} beta^(k+1-s) * norms[s]`.
pub fn prop1_bound(alpha: f64, beta: f64, update_norms: &[f64]) -> f64 {
    let k = update_norms.len();
    update_norms
        .iter()
        .enumerate()
        .map(|(s, &g)| beta.powi((k - s) as i32) * g)
        .sum::<f64>()
        * alpha
}

/// `alpha * beta~ * L / (1 - beta)` with `beta~ = beta^(-(tau+B)/(tau+B+1))`.
pub fn prop2_bound(alpha: f64, beta: f64, tau: usize, b: usize, l: f64) -> Result<f64> {
    if !(beta < 1.0) {
        return Err(GalaError::Domain(format!(
            "stationary bound needs beta < 1, got {beta}"
        )));
    }
    if beta < 0.0 {
        return Err(GalaError::Domain(format!("beta must be nonnegative, got {beta}")));
    }
    if l == 0.0 {
        return Ok(0.0);
    }
    let m = (tau + b) as f64;
    let beta_tilde = if m == 0.0 { 1.0 } else { beta.powf(-m / (m + 1.0)) };
    Ok(alpha * beta_tilde * l / (1.0 - beta))
}

/// `||X - 11^T X / n||_F` for an `n x d` parameter matrix.
pub fn consensus_distance(x: &DMatrix<f64>) -> f64 {
    centered_frobenius(x)
}

/// Stacks the real parameter matrix with `tau` copies for the virtual nodes.
pub fn lift_initial(x0: &DMatrix<f64>, tau: usize) -> DMatrix<f64> {
    let n = x0.nrows();
    DMatrix::from_fn(n * (tau + 1), x0.ncols(), |r, c| x0[(r % n, c)])
}

/// Embeds an `n x d` update matrix in the augmented space (virtual rows zero).
pub fn lift_update(g: &DMatrix<f64>, tau: usize) -> DMatrix<f64> {
    let n = g.nrows();
    let mut out = DMatrix::zeros(n * (tau + 1), g.ncols());
    out.rows_mut(0, n).copy_from(g);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub k: u64,
    /// `||X(k+1) - mean||_F` over the real agents.
    pub empirical_dist: f64,
    pub bound_geometric: f64,
    pub bound_exact: f64,
    pub bound_prop2: f64,
    /// `||G(k)||_F`.
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundTrace {
    pub rows: Vec<BoundRow>,
    pub certificate: GeometricCertificate,
    pub beta_per_matrix: f64,
    pub alpha: f64,
    pub tau: usize,
    pub b: Option<usize>,
    /// `sup_s ||G(s)||_F` over the run.
    pub l: f64,
    /// First `k` at which the stationary bound applies (`tau + B`).
    pub prop2_from: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundViolations {
    pub geometric: usize,
    pub exact: usize,
    pub prop2: usize,
    pub max_ratio_geometric: f64,
    pub max_ratio_exact: f64,
    pub max_ratio_prop2: f64,
}

impl BoundViolations {
    pub fn total(&self) -> usize {
        self.geometric + self.exact + self.prop2
    }
}

/// Absolute slack allowed between the empirical distance and a bound.
pub const BOUND_SLACK: f64 = 1e-9;

impl BoundTrace {
    pub fn violations(&self) -> BoundViolations {
        let mut v = BoundViolations::default();
        for row in &self.rows {
            let e = row.empirical_dist;
            let ratio = |b: f64| if b > 0.0 && b.is_finite() { e / b } else { 0.0 };
            if e > row.bound_geometric + BOUND_SLACK {
                v.geometric += 1;
            }
            v.max_ratio_geometric = v.max_ratio_geometric.max(ratio(row.bound_geometric));
            if e > row.bound_exact + BOUND_SLACK {
                v.exact += 1;
            }
            v.max_ratio_exact = v.max_ratio_exact.max(ratio(row.bound_exact));
            if let Some(from) = self.prop2_from {
                if row.k >= from && row.bound_prop2.is_finite() {
                    if e > row.bound_prop2 + BOUND_SLACK {
                        v.prop2 += 1;
                    }
                    v.max_ratio_prop2 = v.max_ratio_prop2.max(ratio(row.bound_prop2));
                }
            }
        }
        v
    }
}

/// Everything recorded by a run that the bound computation needs.
#[derive(Debug, Clone)]
pub struct TraceInputs<'a> {
    /// `P~(k)` for `k = 0..K`.
    pub mixing: &'a [AugmentedMixing],
    /// Real-agent update matrices `G(k)`, `n x d`.
    pub updates: &'a [DMatrix<f64>],
    /// Real-agent states `X(k)` for `k = 0..=K`.
    pub states: &'a [DMatrix<f64>],
    pub alpha: f64,
    /// Finite staleness bound for the stationary bound; `None` disables it.
    pub tau: Option<usize>,
    pub b: Option<usize>,
    pub window: usize,
    pub exact: bool,
    pub stride: usize,
}

/// Terms smaller than this (after the transient factor) are dropped from the
/// exact bound; the accumulated error stays far below [`BOUND_SLACK`].
const EXACT_DROP: f64 = 1e-14;

pub fn trace_bounds(inputs: &TraceInputs<'_>) -> Result<BoundTrace> {
    let k_total = inputs.mixing.len();
    if inputs.updates.len() != k_total || inputs.states.len() != k_total + 1 {
        return Err(GalaError::invalid(format!(
            "trace needs K mixing matrices, K updates and K+1 states (got {}, {}, {})",
            k_total,
            inputs.updates.len(),
            inputs.states.len()
        )));
    }
    if k_total == 0 {
        return Err(GalaError::invalid("trace needs at least one iteration"));
    }
    let tau_aug = inputs.mixing[0].tau();
    let cert = certify_geometric(inputs.mixing, inputs.window)?;
    let beta_per_matrix = estimate_beta(inputs.mixing, BetaMode::PerMatrix)?;
    let norms: Vec<f64> = inputs.updates.iter().map(|g| g.norm()).collect();
    let l = norms.iter().copied().fold(0.0, f64::max);

    let x0 = lift_initial(&inputs.states[0], tau_aug);
    let init_disagreement = centered_frobenius(&x0);

    let (prop2_value, prop2_from) = match (inputs.tau, inputs.b) {
        (Some(tau), Some(b)) if cert.beta < 1.0 => (
            cert.transient * prop2_bound(inputs.alpha, cert.beta, tau, b, l)?,
            Some((tau + b) as u64),
        ),
        (Some(tau), Some(b)) => (f64::INFINITY, Some((tau + b) as u64)),
        _ => (f64::NAN, None),
    };

    let stride = inputs.stride.max(1);
    let mut rows = Vec::with_capacity(k_total / stride + 1);
    let mut geometric = init_disagreement;
    let mut init_term = if init_disagreement > 0.0 { Some(x0) } else { None };
    let mut terms: Vec<DMatrix<f64>> = Vec::new();
    let mut beta_pow = 1.0;
    for k in 0..k_total {
        let p = &inputs.mixing[k];
        geometric = cert.beta * (geometric + inputs.alpha * norms[k]);
        beta_pow *= cert.beta;

        let exact = if inputs.exact {
            if norms[k] > 0.0 {
                terms.push(lift_update(&inputs.updates[k], tau_aug) * inputs.alpha);
            }
            let mut sum = 0.0;
            terms.retain_mut(|t| {
                *t = p.apply(t);
                let v = centered_frobenius(t);
                sum += v;
                v * cert.transient >= EXACT_DROP
            });
            if let Some(t) = init_term.as_mut() {
                *t = p.apply(t);
                sum += centered_frobenius(t);
            }
            sum
        } else {
            f64::NAN
        };

        if k % stride == 0 || k + 1 == k_total {
            let prop2 = if prop2_value.is_nan() {
                f64::NAN
            } else {
                prop2_value + cert.transient * beta_pow * init_disagreement
            };
            rows.push(BoundRow {
                k: k as u64,
                empirical_dist: consensus_distance(&inputs.states[k + 1]),
                bound_geometric: cert.transient * geometric,
                bound_exact: exact,
                bound_prop2: prop2,
                update_norm: norms[k],
            });
        }
    }
    Ok(BoundTrace {
        rows,
        certificate: cert,
        beta_per_matrix,
        alpha: inputs.alpha,
        tau: tau_aug,
        b: inputs.b,
        l,
        prop2_from,
    })
}

/// Checks an arbitrary dense matrix is row-stochastic (used by tests and the
/// config loader for hand-written matrices).
pub fn validate_row_stochastic(m: &DMatrix<f64>) -> Result<()> {
    check_row_stochastic(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_ring, equal_neighbor_mixing};

    fn ring_p(n: usize) -> MixingMatrix {
        equal_neighbor_mixing(&build_ring(n).unwrap(), 0)
    }

    fn row_sums_ok(m: &DMatrix<f64>) -> bool {
        m.row_iter().all(|r| (r.sum() - 1.0).abs() < 1e-12)
    }

    #[test]
    fn augmented_size() {
        let a = augment(&ring_p(3), &EdgeDelays::new(), 2).unwrap();
        assert_eq!(a.dim(), 9);
        assert!(row_sums_ok(&a.dense()));
    }

    #[test]
    fn tau_zero_is_identity_augmentation() {
        let p = ring_p(5);
        let a = augment(&p, &EdgeDelays::new(), 0).unwrap();
        assert_eq!(a.dense(), *p.entries());
    }

    #[test]
    fn delay_beyond_tau_rejected() {
        let mut d = EdgeDelays::new();
        d.insert((0, 1), 3);
        assert!(matches!(augment(&ring_p(2), &d, 2), Err(GalaError::InvalidArgument(_))));
    }

    #[test]
    fn two_ring_unit_delay_routes_past_values() {
        let mut d = EdgeDelays::new();
        d.insert((0, 1), 1);
        d.insert((1, 0), 1);
        let a = augment(&ring_p(2), &d, 1).unwrap();
        let m = a.dense();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.0, 0.0, 0.5, //
                0.0, 0.5, 0.5, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0,
            ],
        );
        assert_eq!(m, expected);
        // x(2) for agent 0 must mix agent 1's value from one step earlier.
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 3.0, 1.0, 3.0]);
        let x1 = &m * &x;
        let x2 = &m * &x1;
        assert_eq!(x1[(0, 0)], 2.0);
        assert_eq!(x2[(0, 0)], 0.5 * x1[(0, 0)] + 0.5 * x[(1, 0)]);
    }

    #[test]
    fn from_mix_rows_matches_augment() {
        let mut d = EdgeDelays::new();
        d.insert((0, 1), 2);
        d.insert((1, 2), 1);
        let a = augment(&ring_p(3), &d, 2).unwrap();
        let b = AugmentedMixing::from_mix_rows(
            3,
            2,
            &[Some(vec![(2, 0)]), Some(vec![(0, 2)]), Some(vec![(1, 1)])],
        )
        .unwrap();
        assert_eq!(a.dense(), b.dense());
        let y = DMatrix::from_fn(9, 2, |r, c| (r * 3 + c) as f64);
        assert!((a.dense() * &y - b.apply(&y)).amax() < 1e-15);
    }

    #[test]
    fn projection_basis_properties() {
        let q = ProjectionBasis::new(2).unwrap();
        let r = q.rows();
        assert!((r[(0, 0)].abs() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r[(0, 0)] + r[(0, 1)]).abs() < 1e-15);
        for dim in 2..12 {
            let q = ProjectionBasis::new(dim).unwrap();
            let qqt = q.rows() * q.rows().transpose();
            assert!((qqt - DMatrix::identity(dim - 1, dim - 1)).amax() < 1e-12);
            let ones = DVector::from_element(dim, 1.0);
            assert!((q.rows() * ones).amax() < 1e-12);
        }
        assert!(ProjectionBasis::new(1).is_err());
    }

    #[test]
    fn projected_sigma_examples() {
        let q = ProjectionBasis::new(4).unwrap();
        let avg = DMatrix::from_element(4, 4, 0.25);
        assert!(projected_sigma(&avg, &q).unwrap() < 1e-12);
        assert!((projected_sigma(&DMatrix::identity(4, 4), &q).unwrap() - 1.0).abs() < 1e-12);
        let q3 = ProjectionBasis::new(3).unwrap();
        let p = ring_p(3);
        let sigma = projected_sigma(p.entries(), &q3).unwrap();
        let oracle = (q3.rows() * p.entries() * q3.rows().transpose())
            .singular_values()
            .max();
        assert!(sigma > 0.0 && sigma < 1.0);
        assert!((sigma - oracle).abs() < 1e-9);
    }

    #[test]
    fn beta_examples() {
        let avg = AugmentedMixing {
            n: 3,
            tau: 0,
            rows: (0..3).map(|_| (0..3).map(|j| (j, 1.0 / 3.0)).collect()).collect(),
        };
        let seq = vec![avg; 5];
        assert!(estimate_beta(&seq, BetaMode::PerMatrix).unwrap() < 1e-12);
        assert!(estimate_beta(&seq, BetaMode::Windowed { window: 2 }).unwrap() < 1e-12);

        let id = AugmentedMixing::from_mix_rows(3, 0, &[None, None, None]).unwrap();
        let seq = vec![id; 4];
        assert!((estimate_beta(&seq, BetaMode::PerMatrix).unwrap() - 1.0).abs() < 1e-12);

        let ring = augment(&ring_p(3), &EdgeDelays::new(), 0).unwrap();
        let q = ProjectionBasis::new(3).unwrap();
        let oracle = (q.rows() * ring.dense() * q.rows().transpose())
            .singular_values()
            .max();
        let seq = vec![ring; 6];
        assert!((estimate_beta(&seq, BetaMode::PerMatrix).unwrap() - oracle).abs() < 1e-9);
        assert!(estimate_beta(&[], BetaMode::PerMatrix).is_err());
    }

    #[test]
    fn certificate_bounds_every_product() {
        let mix: Vec<AugmentedMixing> = (0..40)
            .map(|k| {
                let rows: Vec<MixRow> = (0..3)
                    .map(|i| {
                        if (k + i) % 3 == 0 {
                            None
                        } else {
                            Some(vec![((i + 2) % 3, (k * 7 + i) % 3)])
                        }
                    })
                    .collect();
                AugmentedMixing::from_mix_rows(3, 2, &rows).unwrap()
            })
            .collect();
        let cert = certify_geometric(&mix, 6).unwrap();
        assert!(cert.transient >= 1.0);
        for s in 0..mix.len() {
            let mut prod = mix[s].dense();
            for l in 1..=(mix.len() - s) {
                if l > 1 {
                    prod = mix[s + l - 1].apply(&prod);
                }
                let norm = center_rows(&prod).singular_values().max();
                let bound = cert.transient * cert.beta.powi(l as i32);
                assert!(norm <= bound * (1.0 + 1e-8) + 1e-12, "s={s} l={l} {norm} > {bound}");
            }
        }
    }

    #[test]
    fn prop1_examples() {
        assert_eq!(prop1_bound(0.1, 0.5, &[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(prop1_bound(0.1, 0.0, &[1.0, 2.0]), 0.0);
        assert!((prop1_bound(0.1, 0.5, &[1.0, 1.0]) - 0.075).abs() < 1e-15);
    }

    #[test]
    fn prop2_examples() {
        assert_eq!(prop2_bound(0.1, 0.5, 0, 1, 0.0).unwrap(), 0.0);
        let v = prop2_bound(0.1, 0.5, 0, 1, 1.0).unwrap();
        assert!((v - 0.1 * 2f64.sqrt() / 0.5).abs() < 1e-12);
        assert!((v - 0.28284).abs() < 1e-5);
        assert!((prop2_bound(0.2, 0.75, 0, 0, 3.0).unwrap() - 0.2 * 3.0 / 0.25).abs() < 1e-12);
        assert!(matches!(prop2_bound(0.1, 1.0, 0, 1, 1.0), Err(GalaError::Domain(_))));
    }

    #[test]
    fn prop2_grows_with_tau() {
        let vals: Vec<f64> = (0..5).map(|t| prop2_bound(0.1, 0.8, t, 1, 1.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn consensus_distance_examples() {
        assert_eq!(consensus_distance(&DMatrix::from_element(3, 2, 4.0)), 0.0);
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        assert!((consensus_distance(&x) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(consensus_distance(&DMatrix::from_element(1, 3, 7.0)), 0.0);
    }
}
