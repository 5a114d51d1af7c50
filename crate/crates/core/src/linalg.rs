//! Small dense helpers shared by the spectral code.

use nalgebra::{DMatrix, DVector};

/// Residual target for the power iteration on `M^T M`.
pub const POWER_RESIDUAL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 50_000;

/// Largest singular value of `m` by power iteration on `M^T M`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let mut v = start_vector(m.ncols());
    spectral_norm_warm(m, &mut v)
}

/// Same as [`spectral_norm`] but starts from (and leaves behind) `v`, which
/// speeds up sequences of closely related matrices.
pub fn spectral_norm_warm(m: &DMatrix<f64>, v: &mut DVector<f64>) -> f64 {
    let cols = m.ncols();
    if cols == 0 || m.nrows() == 0 {
        return 0.0;
    }
    if v.len() != cols || v.norm() == 0.0 || !v.iter().all(|x| x.is_finite()) {
        *v = start_vector(cols);
    }
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    *v /= v.norm();
    let mut lambda = 0.0;
    for iter in 0..POWER_MAX_ITERS {
        let mv = m * &*v;
        let mut w = m.tr_mul(&mv);
        lambda = v.dot(&w);
        let resid = (&w - &*v * lambda).norm();
        let wn = w.norm();
        if wn == 0.0 {
            // v sits in the null space; restart away from it.
            *v = start_vector(cols);
            v[iter % cols] += 1.0;
            *v /= v.norm();
            continue;
        }
        w /= wn;
        *v = w;
        if resid <= POWER_RESIDUAL * lambda.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Deterministic start vector with no special alignment to structured
/// eigenvectors (all-ones, coordinate axes).
fn start_vector(n: usize) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.37 * ((i as f64 + 1.0) * 1.618_033_988_75).sin());
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

/// Subtracts the column means: `(I - 11^T/n) M`.
pub fn center_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    out
}

/// `||(I - 11^T/n) M||_F` without materialising the centred copy.
pub fn centered_frobenius(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows() as f64;
    if m.nrows() == 0 {
        return 0.0;
    }
    m.column_iter()
        .map(|col| {
            let mean = col.sum() / n;
            col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_of_identity_and_zero() {
        assert!((spectral_norm(&DMatrix::identity(5, 5)) - 1.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn matches_dense_svd() {
        let m = DMatrix::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 - 4.5);
        let oracle = m.clone().singular_values().max();
        assert!((spectral_norm(&m) - oracle).abs() < 1e-9 * oracle);
    }

    #[test]
    fn centered_norm_matches_explicit() {
        let m = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 8.0]);
        assert!((centered_frobenius(&m) - center_rows(&m).norm()).abs() < 1e-14);
    }
}
