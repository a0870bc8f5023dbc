//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Jitter levels tried, relative to the mean diagonal, before giving up.
const JITTER_LEVELS: [f64; 7] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5];
const MAX_JITTER: f64 = 1e-4;

/// Cholesky factorization with escalating diagonal jitter.
///
/// Returns the factor and the absolute jitter that was added.
pub fn cholesky_with_jitter(matrix: &DMatrix<f64>, what: &str) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = matrix.nrows();
    if n == 0 || n != matrix.ncols() {
        return Err(Error::ShapeMismatch(format!("{what}: expected a non-empty square matrix")));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned(format!("{what}: non-finite entries")));
    }
    let scale = (matrix.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n as f64).max(f64::MIN_POSITIVE);
    for jitter in JITTER_LEVELS.iter().copied().chain(std::iter::once(MAX_JITTER)) {
        let mut m = matrix.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter * scale;
            }
        }
        if let Some(chol) = m.cholesky() {
            let diag_ok = chol.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0);
            if diag_ok {
                return Ok((chol, jitter * scale));
            }
        }
    }
    Err(Error::IllConditioned(what.to_string()))
}

/// Symmetrizes `m` and clamps its eigenvalues from below at `floor`.
pub fn clamp_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    (&out + out.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}
