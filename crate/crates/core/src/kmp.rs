//! Kernelized movement primitives over a probabilistic reference trajectory.
//!
//! Prediction is `mu(t*) = k* (K + lambda Sigma)^{-1} mu_hat`, where every
//! kernel block is the `2O x 2O` extended kernel coupling positions and
//! velocities through the derivatives of a squared-exponential base kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gmm::ProbRefTrajectory;
use crate::hyperopt::Hyperparams;
use crate::linalg::{cholesky_with_jitter, to_rows};
use crate::trajectory::{uniform_grid, Constraints, Trajectory, ENCODER_POINTS};

/// Relative size of the variance placed on constrained coordinates.
pub const CONSTRAINT_VARIANCE_RATIO: f64 = 1e-6;

/// The four scalar entries `[k, dk/dtj; dk/dti, d2k/dti dtj]` of the extended kernel.
pub fn extended_kernel_scalars(ti: f64, tj: f64, k_h: f64) -> [[f64; 2]; 2] {
    let d = ti - tj;
    let k = (-k_h * d * d).exp();
    let dk_dtj = 2.0 * k_h * d * k;
    let dk_dti = -dk_dtj;
    let d2k = 2.0 * k_h * k * (1.0 - 2.0 * k_h * d * d);
    [[k, dk_dtj], [dk_dti, d2k]]
}

/// Extended kernel block `[[k, dk/dtj], [dk/dti, d2k/dti dtj]] ⊗ I_O`.
pub fn extended_kernel(ti: f64, tj: f64, k_h: f64, dim: usize) -> DMatrix<f64> {
    let e = extended_kernel_scalars(ti, tj, k_h);
    let mut m = DMatrix::zeros(2 * dim, 2 * dim);
    for a in 0..2 {
        for b in 0..2 {
            for k in 0..dim {
                m[(a * dim + k, b * dim + k)] = e[a][b];
            }
        }
    }
    m
}

/// Gram matrix over the reference times with `lambda * blockdiag(Sigma_n)` added.
pub fn kmp_system(reference: &ProbRefTrajectory, k_h: f64, lambda: f64) -> DMatrix<f64> {
    let o = reference.dim();
    let w = 2 * o;
    let n = reference.len();
    let times = &reference.times;
    let mut m = DMatrix::zeros(w * n, w * n);
    for i in 0..n {
        for j in 0..=i {
            let e = extended_kernel_scalars(times[i], times[j], k_h);
            for a in 0..2 {
                for b in 0..2 {
                    for k in 0..o {
                        let r = i * w + a * o + k;
                        let c = j * w + b * o + k;
                        m[(r, c)] = e[a][b];
                        m[(c, r)] = e[a][b];
                    }
                }
            }
        }
    }
    for (i, cov) in reference.covariances.iter().enumerate() {
        for (a, row) in cov.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                m[(i * w + a, i * w + b)] += lambda * v;
            }
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct KmpModel {
    reference: ProbRefTrajectory,
    k_h: f64,
    lambda: f64,
    /// `(K + lambda Sigma)^{-1} mu_hat`
    weights: DVector<f64>,
}

impl KmpModel {
    pub fn new(reference: ProbRefTrajectory, theta: &Hyperparams) -> Result<Self> {
        let (k_h, lambda) = (theta.k_h(), theta.lambda());
        if !(k_h > 0.0 && k_h.is_finite() && lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid KMP hyperparameters k_h={k_h}, lambda={lambda}")));
        }
        let system = kmp_system(&reference, k_h, lambda);
        let (chol, _) = cholesky_with_jitter(&system, "ill-conditioned system")?;
        let mu = DVector::from_iterator(system.nrows(), reference.means.iter().flatten().copied());
        let weights = chol.solve(&mu);
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::IllConditioned("ill-conditioned system: non-finite solve".into()));
        }
        Ok(KmpModel { reference, k_h, lambda, weights })
    }

    pub fn reference(&self) -> &ProbRefTrajectory {
        &self.reference
    }

    pub fn k_h(&self) -> f64 {
        self.k_h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Predicted `[position; velocity]` at `t`.
    pub fn predict(&self, t: f64) -> Vec<f64> {
        let o = self.reference.dim();
        let w = 2 * o;
        let mut out = vec![0.0; w];
        for (j, &tj) in self.reference.times.iter().enumerate() {
            let e = extended_kernel_scalars(t, tj, self.k_h);
            let alpha = &self.weights.as_slice()[j * w..(j + 1) * w];
            for k in 0..o {
                out[k] += e[0][0] * alpha[k] + e[0][1] * alpha[o + k];
                out[o + k] += e[1][0] * alpha[k] + e[1][1] * alpha[o + k];
            }
        }
        out
    }

    /// Predicts on a uniform grid of `n` samples over the reference time span.
    pub fn predict_trajectory(&self, n: usize) -> Result<Trajectory> {
        let o = self.reference.dim();
        let times = uniform_grid(self.reference.times[0], *self.reference.times.last().unwrap(), n);
        let mut positions = Vec::with_capacity(n * o);
        let mut velocities = Vec::with_capacity(n * o);
        for &t in &times {
            let mu = self.predict(t);
            positions.extend_from_slice(&mu[..o]);
            velocities.extend_from_slice(&mu[o..]);
        }
        Trajectory::new(times, positions, velocities, o)
    }
}

pub fn kmp_predict(model: &KmpModel, t: f64) -> Vec<f64> {
    model.predict(t)
}

/// Index of the reference sample nearest to `t` (lowest index on ties).
pub fn nearest_index(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, ti) in times.iter().enumerate() {
        if (ti - t).abs() < (times[best] - t).abs() {
            best = i;
        }
    }
    best
}

/// Replaces the nearest reference sample of every constraint by a
/// low-variance Gaussian centred on the desired point.
pub fn insert_constraints(reference: &ProbRefTrajectory, c: &Constraints, eps: f64) -> Result<ProbRefTrajectory> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("constraint variance must be positive, got {eps}")));
    }
    let o = reference.dim();
    let t0 = reference.times[0];
    let t1 = *reference.times.last().unwrap();
    c.check_against(t0, t1, o)?;
    let mut out = reference.clone();
    let mut used: Vec<usize> = Vec::with_capacity(c.len());
    for p in c.points() {
        let idx = nearest_index(&reference.times, p.time);
        if used.contains(&idx) {
            return Err(Error::ConflictingConstraints(idx));
        }
        used.push(idx);
        let mut cov = reference.covariance(idx);
        out.means[idx][..o].copy_from_slice(&p.position);
        for a in 0..o {
            for b in 0..2 * o {
                cov[(a, b)] = 0.0;
                cov[(b, a)] = 0.0;
            }
            cov[(a, a)] = eps;
        }
        if let Some(v) = &p.velocity {
            out.means[idx][o..].copy_from_slice(v);
            for a in o..2 * o {
                for b in 0..2 * o {
                    cov[(a, b)] = 0.0;
                    cov[(b, a)] = 0.0;
                }
                cov[(a, a)] = eps;
            }
        }
        out.covariances[idx] = to_rows(&cov);
    }
    Ok(out)
}

/// `CONSTRAINT_VARIANCE_RATIO` times the median covariance trace of the reference.
pub fn default_constraint_variance(reference: &ProbRefTrajectory) -> f64 {
    let mut traces: Vec<f64> = reference
        .covariances
        .iter()
        .map(|c| c.iter().enumerate().map(|(i, row)| row[i]).sum())
        .collect();
    traces.sort_by(f64::total_cmp);
    let n = traces.len();
    let median = if n % 2 == 1 { traces[n / 2] } else { 0.5 * (traces[n / 2 - 1] + traces[n / 2]) };
    CONSTRAINT_VARIANCE_RATIO * median
}

/// Adapts the reference towards the desired points in `c` and predicts on the
/// encoder grid.
pub fn adapt_kmp(reference: &ProbRefTrajectory, c: &Constraints, theta: &Hyperparams) -> Result<Trajectory> {
    let eps = default_constraint_variance(reference);
    let augmented = insert_constraints(reference, c, eps)?;
    KmpModel::new(augmented, theta)?.predict_trajectory(ENCODER_POINTS)
}
