//! Gaussian mixture fitting over time-augmented samples and Gaussian mixture
//! regression of `[position; velocity]` on time.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{clamp_eigenvalues, cholesky_with_jitter, from_rows, to_rows};
use crate::trajectory::{resample, uniform_grid, Demonstration, Trajectory};

pub const DEFAULT_COMPONENTS: usize = 8;
pub const COVARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub components: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub floor: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            components: DEFAULT_COMPONENTS,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            floor: COVARIANCE_FLOOR,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub floor: f64,
}

/// Outcome of an EM run.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GaussianMixture,
    /// Total log-likelihood after initialization and after every EM iteration.
    pub log_likelihoods: Vec<f64>,
    pub warnings: Vec<String>,
    pub converged: bool,
}

impl GaussianMixture {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Total log-likelihood of the sample rows.
    pub fn log_likelihood(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let densities = ComponentDensities::new(self)?;
        Ok(samples
            .iter()
            .map(|x| log_sum_exp(&densities.log_weighted(&DVector::from_column_slice(x))))
            .sum())
    }
}

/// Cached inverse covariances and log-normalizers of every component.
struct ComponentDensities<'a> {
    model: &'a GaussianMixture,
    inverses: Vec<DMatrix<f64>>,
    log_norms: Vec<f64>,
}

impl<'a> ComponentDensities<'a> {
    fn new(model: &'a GaussianMixture) -> Result<Self> {
        let d = model.dim() as f64;
        let mut inverses = Vec::with_capacity(model.components());
        let mut log_norms = Vec::with_capacity(model.components());
        for cov in &model.covariances {
            let (chol, _) = cholesky_with_jitter(cov, "mixture covariance")?;
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            inverses.push(chol.inverse());
            log_norms.push(-0.5 * (d * (2.0 * PI).ln() + log_det));
        }
        Ok(ComponentDensities { model, inverses, log_norms })
    }

    /// `ln(pi_k) + ln N(x | mu_k, Sigma_k)` for every component.
    fn log_weighted(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.model.components())
            .map(|k| {
                let w = self.model.weights[k];
                if w <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let diff = x - &self.model.means[k];
                let maha = diff.dot(&(&self.inverses[k] * &diff));
                w.ln() + self.log_norms[k] - 0.5 * maha
            })
            .collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// k-means++ seeding: indices of the chosen centre samples.
fn kmeans_pp(points: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut centres = vec![rng.random_range(0..points.len())];
    let mut dist2: Vec<f64> = points.iter().map(|p| (p - &points[centres[0]]).norm_squared()).collect();
    while centres.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centre
            (0..points.len()).find(|i| !centres.contains(i)).unwrap_or(0)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in dist2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centres.push(next);
        for (d, p) in dist2.iter_mut().zip(points) {
            *d = d.min((p - &points[next]).norm_squared());
        }
    }
    centres
}

/// Fits a `K`-component Gaussian mixture by EM.
///
/// The covariance update clamps eigenvalues at the floor, which is the exact
/// maximizer of the expected complete-data log-likelihood over covariances
/// bounded below by `floor * I`; the log-likelihood therefore never decreases.
pub fn fit_gmm(samples: &[Vec<f64>], opts: &EmOptions) -> Result<GmmFit> {
    let k = opts.components;
    if k == 0 {
        return Err(Error::InvalidArgument("at least one component required".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::ShapeMismatch("samples have differing dimensions".into()));
    }
    if samples.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{k} components requested for {} samples",
            samples.len()
        )));
    }
    let points: Vec<DVector<f64>> = samples.iter().map(|s| DVector::from_column_slice(s)).collect();
    let n = points.len();
    let mut warnings = Vec::new();
    if n < k * (2 + dim) {
        warnings.push(format!("only {n} samples for {k} components of dimension {dim}"));
    }

    // initialization: hard assignment to k-means++ centres
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let centres = kmeans_pp(&points, k, &mut rng);
    let mut resp = DMatrix::<f64>::zeros(n, k);
    for (i, p) in points.iter().enumerate() {
        let best = centres
            .iter()
            .enumerate()
            .map(|(c, &idx)| (c, (p - &points[idx]).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
            .unwrap();
        resp[(i, best)] = 1.0;
    }
    let global_cov = clamp_eigenvalues(&weighted_covariance(&points, &vec![1.0; n], &mean_of(&points)), opts.floor);
    let mut model = GaussianMixture {
        weights: vec![1.0 / k as f64; k],
        means: centres.iter().map(|&i| points[i].clone()).collect(),
        covariances: vec![global_cov.clone(); k],
        floor: opts.floor,
    };
    m_step(&points, &resp, &mut model, &mut warnings, &global_cov);

    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    let mut prev = e_step(&points, &model, &mut resp)?;
    log_likelihoods.push(prev);
    for _ in 0..opts.max_iters {
        m_step(&points, &resp, &mut model, &mut warnings, &global_cov);
        let ll = e_step(&points, &model, &mut resp)?;
        log_likelihoods.push(ll);
        let rel = (ll - prev).abs() / prev.abs().max(1e-300);
        prev = ll;
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    warnings.dedup();
    Ok(GmmFit { model, log_likelihoods, warnings, converged })
}

fn mean_of(points: &[DVector<f64>]) -> DVector<f64> {
    let mut m = DVector::zeros(points[0].len());
    for p in points {
        m += p;
    }
    m / points.len() as f64
}

fn weighted_covariance(points: &[DVector<f64>], weights: &[f64], mean: &DVector<f64>) -> DMatrix<f64> {
    let d = mean.len();
    let mut cov = DMatrix::zeros(d, d);
    let mut total = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let diff = p - mean;
        cov.ger(w, &diff, &diff, 1.0);
        total += w;
    }
    if total > 0.0 {
        cov /= total;
    }
    cov
}

/// Fills `resp` with responsibilities and returns the total log-likelihood.
fn e_step(points: &[DVector<f64>], model: &GaussianMixture, resp: &mut DMatrix<f64>) -> Result<f64> {
    let densities = ComponentDensities::new(model)?;
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let logs = densities.log_weighted(p);
        let lse = log_sum_exp(&logs);
        if !lse.is_finite() {
            return Err(Error::Degenerate(format!("sample {i} has zero likelihood under every component")));
        }
        for (k, l) in logs.iter().enumerate() {
            resp[(i, k)] = (l - lse).exp();
        }
        total += lse;
    }
    Ok(total)
}

fn m_step(
    points: &[DVector<f64>],
    resp: &DMatrix<f64>,
    model: &mut GaussianMixture,
    warnings: &mut Vec<String>,
    fallback_cov: &DMatrix<f64>,
) {
    let n = points.len() as f64;
    for k in 0..model.components() {
        let weights: Vec<f64> = resp.column(k).iter().copied().collect();
        let nk: f64 = weights.iter().sum();
        if nk <= f64::MIN_POSITIVE {
            warnings.push(format!("component {k} received no responsibility mass"));
            model.weights[k] = 0.0;
            model.covariances[k] = fallback_cov.clone();
            continue;
        }
        if nk < 2.0 {
            warnings.push(format!("component {k} is supported by fewer than 2 samples; covariance floored"));
        }
        let mut mean = DVector::zeros(points[0].len());
        for (p, &w) in points.iter().zip(&weights) {
            mean.axpy(w / nk, p, 1.0);
        }
        let cov = weighted_covariance(points, &weights, &mean);
        model.weights[k] = nk / n;
        model.means[k] = mean;
        model.covariances[k] = clamp_eigenvalues(&cov, model.floor);
    }
    let total: f64 = model.weights.iter().sum();
    for w in &mut model.weights {
        *w /= total;
    }
}

/// Gaussian mixture regression of the non-time coordinates on time.
///
/// The first coordinate of the mixture must be time. Returns the conditional
/// mean and the law-of-total-variance covariance, symmetrized and floored.
pub fn gmr(model: &GaussianMixture, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = model.dim();
    if d < 2 {
        return Err(Error::ShapeMismatch("mixture needs time plus at least one output".into()));
    }
    let out = d - 1;
    let mut log_h = Vec::with_capacity(model.components());
    let mut cond_means = Vec::with_capacity(model.components());
    let mut cond_covs = Vec::with_capacity(model.components());
    for k in 0..model.components() {
        let mu = &model.means[k];
        let cov = &model.covariances[k];
        let var_t = cov[(0, 0)];
        let dt = t - mu[0];
        let w = model.weights[k];
        log_h.push(if w > 0.0 {
            w.ln() - 0.5 * ((2.0 * PI * var_t).ln() + dt * dt / var_t)
        } else {
            f64::NEG_INFINITY
        });
        let cross = cov.view((1, 0), (out, 1)).column(0).into_owned();
        let mean = mu.rows(1, out).into_owned() + &cross * (dt / var_t);
        let c = cov.view((1, 1), (out, out)).into_owned() - &cross * cross.transpose() / var_t;
        cond_means.push(mean);
        cond_covs.push(c);
    }
    let lse = log_sum_exp(&log_h);
    // every component density underflows
    if !lse.is_finite() || lse < f64::MIN_POSITIVE.ln() {
        return Err(Error::OutsideSupport(t));
    }
    let h: Vec<f64> = log_h.iter().map(|l| (l - lse).exp()).collect();
    let mut mean = DVector::zeros(out);
    for (hk, m) in h.iter().zip(&cond_means) {
        mean.axpy(*hk, m, 1.0);
    }
    let mut cov = DMatrix::zeros(out, out);
    for ((hk, m), c) in h.iter().zip(&cond_means).zip(&cond_covs) {
        if *hk == 0.0 {
            continue;
        }
        cov += c * *hk;
        cov.ger(*hk, m, m, 1.0);
    }
    cov.ger(-1.0, &mean, &mean, 1.0);
    Ok((mean, clamp_eigenvalues(&cov, model.floor)))
}

/// Per-timestep Gaussian over `[position; velocity]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRefTrajectory {
    pub times: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

impl ProbRefTrajectory {
    pub fn new(times: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = times.len();
        if n < 2 || means.len() != n || covariances.len() != n {
            return Err(Error::ShapeMismatch("reference arrays disagree in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTrajectory("reference times must be strictly increasing".into()));
        }
        let width = means[0].len();
        if width == 0 || width % 2 != 0 {
            return Err(Error::ShapeMismatch("reference means must have even width 2O".into()));
        }
        for (m, c) in means.iter().zip(&covariances) {
            if m.len() != width || c.len() != width || c.iter().any(|r| r.len() != width) {
                return Err(Error::ShapeMismatch("reference mean/covariance width mismatch".into()));
            }
        }
        Ok(ProbRefTrajectory { times, means, covariances })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Position dimension `O`.
    pub fn dim(&self) -> usize {
        self.means[0].len() / 2
    }

    pub fn covariance(&self, n: usize) -> DMatrix<f64> {
        from_rows(&self.covariances[n]).expect("validated on construction")
    }

    /// The mean as a trajectory (positions and velocities from the two blocks).
    pub fn mean_trajectory(&self) -> Result<Trajectory> {
        let o = self.dim();
        let positions = self.means.iter().flat_map(|m| m[..o].iter().copied()).collect();
        let velocities = self.means.iter().flat_map(|m| m[o..].iter().copied()).collect();
        Trajectory::new(self.times.clone(), positions, velocities, o)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ProbRefTrajectory = serde_json::from_str(text)?;
        ProbRefTrajectory::new(raw.times, raw.means, raw.covariances)
    }
}

/// Fits a mixture over `[t, x, v]` rows of time-aligned demonstrations and
/// evaluates GMR on a uniform grid of `n_ref` times.
pub fn extract_reference(demos: &[Demonstration], n_ref: usize, opts: &EmOptions) -> Result<ProbRefTrajectory> {
    if demos.len() < 2 {
        return Err(Error::InvalidArgument("at least two demonstrations required".into()));
    }
    let dim = demos[0].trajectory.dim();
    if demos.iter().any(|d| d.trajectory.dim() != dim) {
        return Err(Error::ShapeMismatch("demonstrations have differing dimensions".into()));
    }
    // Align every demonstration onto a shared time axis starting at zero.
    let duration = demos.iter().map(|d| d.trajectory.duration()).sum::<f64>() / demos.len() as f64;
    let mut samples = Vec::with_capacity(demos.len() * n_ref);
    for demo in demos {
        let aligned = resample(&demo.trajectory, n_ref)?;
        let grid = uniform_grid(0.0, duration, n_ref);
        for (n, &t) in grid.iter().enumerate() {
            let mut row = Vec::with_capacity(1 + 2 * dim);
            row.push(t);
            row.extend_from_slice(aligned.position(n));
            row.extend_from_slice(aligned.velocity(n));
            samples.push(row);
        }
    }
    // sorted rows make the fit independent of demonstration order
    samples.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let fit = fit_gmm(&samples, opts)?;
    let times = uniform_grid(0.0, duration, n_ref);
    let mut means = Vec::with_capacity(n_ref);
    let mut covariances = Vec::with_capacity(n_ref);
    for &t in &times {
        let (m, c) = gmr(&fit.model, t)?;
        means.push(m.iter().copied().collect());
        covariances.push(to_rows(&c));
    }
    ProbRefTrajectory::new(times, means, covariances)
}
