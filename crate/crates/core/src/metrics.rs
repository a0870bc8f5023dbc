//! Trajectory discrepancy measures.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::gmm::ProbRefTrajectory;
use crate::trajectory::Trajectory;

fn check_same_shape(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{} trajectories",
            a.len(),
            a.dim(),
            b.len(),
            b.dim()
        )));
    }
    Ok(())
}

/// Mean squared distance between stacked `[position; velocity]` points.
pub fn mse(reference: &Trajectory, traj: &Trajectory) -> Result<f64> {
    check_same_shape(reference, traj)?;
    let sum: f64 = reference
        .positions()
        .iter()
        .zip(traj.positions())
        .chain(reference.velocities().iter().zip(traj.velocities()))
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// Mean Mahalanobis distance of the stacked points under the reference covariances.
pub fn mle_cost(reference: &ProbRefTrajectory, traj: &Trajectory) -> Result<f64> {
    let o = reference.dim();
    if traj.len() != reference.len() || traj.dim() != o {
        return Err(Error::ShapeMismatch(format!(
            "reference {}x{} vs trajectory {}x{}",
            reference.len(),
            o,
            traj.len(),
            traj.dim()
        )));
    }
    let mut total = 0.0;
    for n in 0..reference.len() {
        let cov = reference.covariance(n);
        let chol = cov.clone().cholesky().ok_or(Error::SingularCovariance(n))?;
        let diff = nalgebra::DVector::from_iterator(
            2 * o,
            traj.stacked(n).iter().zip(&reference.means[n]).map(|(a, b)| a - b),
        );
        total += diff.dot(&chol.solve(&diff));
    }
    Ok(total / reference.len() as f64)
}

/// Discrete Fréchet distance between two polylines stored row-major with `dim` coordinates.
pub fn discrete_frechet(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || a.is_empty() || b.is_empty() || a.len() % dim != 0 || b.len() % dim != 0 {
        return Err(Error::InvalidArgument("polylines must be non-empty with matching dimension".into()));
    }
    let n = a.len() / dim;
    let m = b.len() / dim;
    let dist = |i: usize, j: usize| -> f64 {
        a[i * dim..(i + 1) * dim]
            .iter()
            .zip(&b[j * dim..(j + 1) * dim])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for i in 0..n {
        for j in 0..m {
            let d = dist(i, j);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Fréchet distance between the position polylines of two trajectories.
pub fn trajectory_frechet(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch("trajectory dimensions differ".into()));
    }
    discrete_frechet(a.positions(), b.positions(), a.dim())
}

/// Components of the shape-distortion score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeDistortion {
    /// RMS residual after similarity alignment, relative to the demo's bounding-box diagonal.
    pub residual: f64,
    /// Mean squared second difference of the aligned trajectory over the demo's.
    pub jerk_ratio: f64,
    /// `residual + max(0, jerk_ratio - 2)`
    pub total: f64,
}

/// Best similarity transform (uniform scale, rotation, translation) taking
/// the rows of `src` onto `dst`, applied to `src`.
pub fn similarity_align(dst: &[f64], src: &[f64], dim: usize) -> Vec<f64> {
    let n = dst.len() / dim;
    let centroid = |p: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        for row in p.chunks_exact(dim) {
            for (ck, x) in c.iter_mut().zip(row) {
                *ck += x;
            }
        }
        c.iter().map(|v| v / n as f64).collect()
    };
    let mu_d = centroid(dst);
    let mu_s = centroid(src);
    let mut cross = DMatrix::<f64>::zeros(dim, dim);
    let mut var_s = 0.0;
    for (rd, rs) in dst.chunks_exact(dim).zip(src.chunks_exact(dim)) {
        for i in 0..dim {
            let yi = rs[i] - mu_s[i];
            var_s += yi * yi;
            for j in 0..dim {
                cross[(j, i)] += (rd[j] - mu_d[j]) * yi;
            }
        }
    }
    if var_s <= 0.0 {
        return mu_d.iter().copied().cycle().take(n * dim).collect();
    }
    let svd = cross.clone().svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut signs = vec![1.0; dim];
    if (u.determinant() * v_t.determinant()) < 0.0 {
        signs[dim - 1] = -1.0;
    }
    let s_mat = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(signs.clone()));
    let rot = &u * &s_mat * &v_t;
    let trace: f64 = svd.singular_values.iter().zip(&signs).map(|(d, s)| d * s).sum();
    let scale = trace / var_s;
    let mut out = Vec::with_capacity(n * dim);
    for rs in src.chunks_exact(dim) {
        for j in 0..dim {
            let mut v = mu_d[j];
            for i in 0..dim {
                v += scale * rot[(j, i)] * (rs[i] - mu_s[i]);
            }
            out.push(v);
        }
    }
    out
}

fn mean_squared_second_difference(p: &[f64], dim: usize) -> f64 {
    let n = p.len() / dim;
    if n < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 1..n - 1 {
        for k in 0..dim {
            let d2 = p[(i + 1) * dim + k] - 2.0 * p[i * dim + k] + p[(i - 1) * dim + k];
            total += d2 * d2;
        }
    }
    total / (n - 2) as f64
}

/// Shape-distortion score of `traj` against `demo` (positions only).
pub fn shape_distortion_parts(demo: &Trajectory, traj: &Trajectory) -> Result<ShapeDistortion> {
    check_same_shape(demo, traj)?;
    let dim = demo.dim();
    let diag = demo.bbox_diagonal();
    if !(diag > 1e-12) {
        return Err(Error::Degenerate("demonstration has a zero bounding-box diagonal".into()));
    }
    let aligned = similarity_align(demo.positions(), traj.positions(), dim);
    let n = demo.len() as f64;
    let sq: f64 = aligned.iter().zip(demo.positions()).map(|(a, d)| (a - d) * (a - d)).sum();
    let residual = (sq / n).sqrt() / diag;
    let demo_jerk = mean_squared_second_difference(demo.positions(), dim);
    if !(demo_jerk > 0.0) {
        return Err(Error::Degenerate("demonstration has no curvature".into()));
    }
    let jerk_ratio = mean_squared_second_difference(&aligned, dim) / demo_jerk;
    Ok(ShapeDistortion { residual, jerk_ratio, total: residual + (jerk_ratio - 2.0).max(0.0) })
}

pub fn shape_distortion(demo: &Trajectory, traj: &Trajectory) -> Result<f64> {
    shape_distortion_parts(demo, traj).map(|s| s.total)
}

/// Euclidean distance between the embeddings of `demo` and `traj`.
pub fn latent_metric(encoder: &EncoderParams, demo: &Trajectory, traj: &Trajectory) -> Result<f64> {
    let a = encoder.encode(demo)?;
    let b = encoder.encode(traj)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// All discrepancy measures of one adapted trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    /// Only defined against a probabilistic reference.
    pub mle: Option<f64>,
    pub frechet: f64,
    pub latent: Option<f64>,
    pub shape_distortion: f64,
}

impl MetricReport {
    /// Evaluates every metric; `demo` and `traj` must share the sample count.
    pub fn evaluate(
        demo: &Trajectory,
        traj: &Trajectory,
        reference: Option<&ProbRefTrajectory>,
        encoder: Option<&EncoderParams>,
    ) -> Result<Self> {
        let mle = match reference {
            Some(r) => {
                let on_grid = crate::trajectory::ensure_len(traj, r.len())?;
                Some(mle_cost(r, &on_grid)?)
            }
            None => None,
        };
        Ok(MetricReport {
            mse: mse(demo, traj)?,
            mle,
            frechet: trajectory_frechet(demo, traj)?,
            latent: encoder.map(|e| latent_metric(e, demo, traj)).transpose()?,
            shape_distortion: shape_distortion(demo, traj)?,
        })
    }
}
