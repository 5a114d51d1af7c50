//! Reference computations shared by the integration tests. Nothing here calls
//! into the library's own linear algebra or mixing code.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use gala_core::learners::a2c::{a2c_objective, A2cConfig, Rollout, Targets};
use gala_core::learners::model::PolicyValueModel;
use gala_core::spectral::MixRow;

/// Random directed edge set on `n` nodes, each ordered pair kept with
/// probability `p`.
pub fn random_edges(n: usize, p: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if i != j && rng.gen_bool(p) {
                e.push((j, i));
            }
        }
    }
    e
}

/// Random strongly connected digraph: a Hamiltonian cycle through a random
/// permutation plus extra random edges.
pub fn random_strongly_connected(n: usize, p: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut set: BTreeSet<(usize, usize)> = BTreeSet::new();
    if n > 1 {
        for w in 0..n {
            set.insert((order[w], order[(w + 1) % n]));
        }
    }
    set.extend(random_edges(n, p, rng));
    set.into_iter().collect()
}

/// `p_ij = 1 / (1 + indeg(i))` for `j = i` or `(j, i)` an edge.
pub fn equal_neighbor_oracle(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let set: BTreeSet<(usize, usize)> = edges.iter().copied().filter(|(a, b)| a != b).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let ins: Vec<usize> = set.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
        let w = 1.0 / (1 + ins.len()) as f64;
        m[(i, i)] = w;
        for j in ins {
            m[(i, j)] = w;
        }
    }
    m
}

/// Left Perron vector by a direct linear solve of `pi^T (P - I) = 0`,
/// `sum pi = 1`.
pub fn stationary_oracle(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).expect("irreducible chain gives a nonsingular system");
    x.iter().copied().collect()
}

/// Dense augmented matrix assembled directly from the mixing decisions:
/// row `i` averages itself and each `(sender, delay)` column `delay * n + sender`;
/// virtual row `lag * n + j` copies `(lag - 1) * n + j`.
pub fn dense_augmented(n: usize, h: usize, rows: &[MixRow]) -> DMatrix<f64> {
    let dim = n * (h + 1);
    let mut m = DMatrix::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        match row {
            None => m[(i, i)] = 1.0,
            Some(inputs) => {
                let w = 1.0 / (1 + inputs.len()) as f64;
                m[(i, i)] += w;
                for &(j, d) in inputs {
                    m[(i, d * n + j)] += w;
                }
            }
        }
    }
    for lag in 1..=h {
        for j in 0..n {
            m[(lag * n + j, (lag - 1) * n + j)] = 1.0;
        }
    }
    m
}

/// Column-stacked copies of `x` for every virtual layer.
pub fn lift(x: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let (n, d) = x.shape();
    DMatrix::from_fn(n * (h + 1), d, |r, c| x[(r % n, c)])
}

/// Updates enter the real-agent rows only.
pub fn lift_zero_padded(g: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let (n, d) = g.shape();
    DMatrix::from_fn(n * (h + 1), d, |r, c| if r < n { g[(r, c)] } else { 0.0 })
}

pub fn frob(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = l2(a).max(l2(b));
    if scale == 0.0 {
        0.0
    } else {
        l2(&diff) / scale
    }
}

/// Central differences of the actor-critic objective with targets held fixed.
pub fn fd_gradient(model: &PolicyValueModel, params: &[f64], rollout: &Rollout, targets: &Targets, cfg: &A2cConfig, h: f64) -> Vec<f64> {
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = a2c_objective(model, &x, rollout, targets, cfg).total;
            x[i] = orig - h;
            let down = a2c_objective(model, &x, rollout, targets, cfg).total;
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
