//! Dynamical movement primitives with a Gaussian-process forcing term.
//!
//! Transformation system:
//! `tau^2 x'' = Kp (g - x) - tau Kv x' + s (g - x0) ⊙ f(s)` driven by the
//! canonical phase `tau s' = -alpha s`. The forcing term is regressed over
//! phase with a squared-exponential kernel `exp(-k_h (s_i - s_j)^2)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperopt::Hyperparams;
use crate::linalg::cholesky_with_jitter;
use crate::trajectory::{resample, Constraints, Demonstration, Trajectory, ENCODER_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmpConfig {
    pub alpha: f64,
    /// Diagonal stiffness shared by every dimension; damping is `2 sqrt(Kp)`.
    pub stiffness: f64,
    /// Dimensions with `|g - x0| < guard * bbox_diagonal` get no forcing term.
    pub amplitude_guard: f64,
}

impl Default for DmpConfig {
    fn default() -> Self {
        DmpConfig { alpha: 4.0, stiffness: 100.0, amplitude_guard: 1e-6 }
    }
}

/// Canonical phase `exp(-alpha t / tau)`.
pub fn canonical_phase(t: f64, tau: f64, alpha: f64) -> f64 {
    (-alpha * t / tau).exp()
}

pub fn squared_exponential(a: f64, b: f64, k_h: f64) -> f64 {
    (-k_h * (a - b).powi(2)).exp()
}

/// Phase/forcing training pairs extracted from one demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingTargets {
    pub phases: Vec<f64>,
    /// Row-major `N x O`; zero on inactive dimensions.
    pub values: Vec<f64>,
    pub active: Vec<bool>,
    pub dim: usize,
    pub tau: f64,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

/// Inverts the transformation system on a demonstration to recover `f(s_n)`.
pub fn extract_forcing_targets(demo: &Demonstration, cfg: &DmpConfig) -> Result<ForcingTargets> {
    let traj = &demo.trajectory;
    let dim = traj.dim();
    let tau = traj.duration();
    let start = traj.first_position().to_vec();
    let goal = traj.last_position().to_vec();
    let scale = traj.bbox_diagonal();
    let active: Vec<bool> = start
        .iter()
        .zip(&goal)
        .map(|(x0, g)| scale > 0.0 && (g - x0).abs() >= cfg.amplitude_guard * scale)
        .collect();
    if !active.iter().any(|&a| a) {
        return Err(Error::ZeroAmplitude);
    }
    let kp = cfg.stiffness;
    let kv = 2.0 * kp.sqrt();
    let t0 = traj.start_time();
    let mut phases = Vec::with_capacity(traj.len());
    let mut values = Vec::with_capacity(traj.len() * dim);
    for n in 0..traj.len() {
        let s = canonical_phase(traj.times()[n] - t0, tau, cfg.alpha);
        phases.push(s);
        let x = traj.position(n);
        let v = traj.velocity(n);
        let a = demo.acceleration(n);
        for k in 0..dim {
            values.push(if active[k] {
                (tau * tau * a[k] - kp * (goal[k] - x[k]) + tau * kv * v[k]) / (s * (goal[k] - start[k]))
            } else {
                0.0
            });
        }
    }
    Ok(ForcingTargets { phases, values, active, dim, tau, start, goal })
}

/// GP regression of the forcing term with a cached `(K + lambda I)^{-1} U`.
#[derive(Debug, Clone)]
pub struct GpForcing {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    active: Vec<bool>,
    dim: usize,
    k_h: f64,
    lambda: f64,
    /// `(K + lambda I)^{-1} U`, one column per output dimension.
    weights: DMatrix<f64>,
}

impl GpForcing {
    pub fn fit(inputs: Vec<f64>, targets: Vec<f64>, dim: usize, active: Vec<bool>, k_h: f64, lambda: f64) -> Result<Self> {
        let n = inputs.len();
        if n == 0 || targets.len() != n * dim || active.len() != dim {
            return Err(Error::ShapeMismatch("forcing targets do not match inputs".into()));
        }
        if !(k_h > 0.0) || !(lambda >= 0.0) || !k_h.is_finite() || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid GP hyperparameters k_h={k_h}, lambda={lambda}")));
        }
        let mut gram = DMatrix::from_fn(n, n, |i, j| squared_exponential(inputs[i], inputs[j], k_h));
        for i in 0..n {
            gram[(i, i)] += lambda;
        }
        let (chol, _) = cholesky_with_jitter(&gram, "ill-conditioned Gram")?;
        let u = DMatrix::from_row_slice(n, dim, &targets);
        let weights = chol.solve(&u);
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::IllConditioned("ill-conditioned Gram: non-finite solve".into()));
        }
        Ok(GpForcing { inputs, targets, active, dim, k_h, lambda, weights })
    }

    pub fn from_targets(targets: &ForcingTargets, k_h: f64, lambda: f64) -> Result<Self> {
        GpForcing::fit(
            targets.phases.clone(),
            targets.values.clone(),
            targets.dim,
            targets.active.clone(),
            k_h,
            lambda,
        )
    }

    /// `f_i(s*) = k* (K + lambda I)^{-1} U_i`; zero on inactive dimensions.
    pub fn predict(&self, s: f64) -> Vec<f64> {
        let kstar = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|&si| squared_exponential(s, si, self.k_h)),
        );
        (0..self.dim)
            .map(|k| if self.active[k] { self.weights.column(k).dot(&kstar) } else { 0.0 })
            .collect()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn k_h(&self) -> f64 {
        self.k_h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

pub fn gp_predict(gp: &GpForcing, s: f64) -> Vec<f64> {
    gp.predict(s)
}

#[derive(Debug, Clone)]
pub struct DmpModel {
    pub alpha: f64,
    pub tau: f64,
    pub kp: Vec<f64>,
    pub kv: Vec<f64>,
    pub xi0_demo: Vec<f64>,
    pub goal_demo: Vec<f64>,
    pub gp: GpForcing,
}

#[derive(Serialize, Deserialize)]
struct DmpRecord {
    alpha: f64,
    tau: f64,
    kp: Vec<f64>,
    kv: Vec<f64>,
    xi0_demo: Vec<f64>,
    goal_demo: Vec<f64>,
    k_h: f64,
    lambda: f64,
    phases: Vec<f64>,
    forcing: Vec<f64>,
    active: Vec<bool>,
}

impl DmpModel {
    /// Learns a DMP from one demonstration with kernel width and regularization from `theta`.
    pub fn learn(demo: &Demonstration, theta: &Hyperparams, cfg: &DmpConfig) -> Result<Self> {
        let targets = extract_forcing_targets(demo, cfg)?;
        let gp = GpForcing::from_targets(&targets, theta.k_h(), theta.lambda())?;
        let kv = 2.0 * cfg.stiffness.sqrt();
        Ok(DmpModel {
            alpha: cfg.alpha,
            tau: targets.tau,
            kp: vec![cfg.stiffness; targets.dim],
            kv: vec![kv; targets.dim],
            xi0_demo: targets.start,
            goal_demo: targets.goal,
            gp,
        })
    }

    pub fn dim(&self) -> usize {
        self.kp.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let record = DmpRecord {
            alpha: self.alpha,
            tau: self.tau,
            kp: self.kp.clone(),
            kv: self.kv.clone(),
            xi0_demo: self.xi0_demo.clone(),
            goal_demo: self.goal_demo.clone(),
            k_h: self.gp.k_h,
            lambda: self.gp.lambda,
            phases: self.gp.inputs.clone(),
            forcing: self.gp.targets.clone(),
            active: self.gp.active.clone(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: DmpRecord = serde_json::from_str(text)?;
        let dim = r.kp.len();
        let gp = GpForcing::fit(r.phases, r.forcing, dim, r.active, r.k_h, r.lambda)?;
        Ok(DmpModel {
            alpha: r.alpha,
            tau: r.tau,
            kp: r.kp,
            kv: r.kv,
            xi0_demo: r.xi0_demo,
            goal_demo: r.goal_demo,
            gp,
        })
    }
}

/// Integrates the transformation system with semi-implicit Euler from rest at `xi0`.
///
/// Returns `floor(tau / dt) + 1` samples at times `n dt`.
pub fn rollout(model: &DmpModel, xi0: &[f64], goal: &[f64], tau: f64, dt: f64) -> Result<Trajectory> {
    let dim = model.dim();
    if xi0.len() != dim || goal.len() != dim {
        return Err(Error::ShapeMismatch(format!("start/goal must have dimension {dim}")));
    }
    if !(dt > 0.0) || !(tau > 0.0) || tau / dt < 10.0 - 1e-9 {
        return Err(Error::InvalidArgument(format!("need dt > 0 and tau/dt >= 10 (tau={tau}, dt={dt})")));
    }
    let steps = (tau / dt + 1e-9).floor() as usize + 1;
    let amplitude: Vec<f64> = goal.iter().zip(xi0).map(|(g, x0)| g - x0).collect();
    let mut x = xi0.to_vec();
    let mut v = vec![0.0; dim];
    let mut times = Vec::with_capacity(steps);
    let mut positions = Vec::with_capacity(steps * dim);
    let mut velocities = Vec::with_capacity(steps * dim);
    for n in 0..steps {
        let t = n as f64 * dt;
        times.push(t);
        positions.extend_from_slice(&x);
        velocities.extend_from_slice(&v);
        let s = canonical_phase(t, tau, model.alpha);
        let f = model.gp.predict(s);
        for k in 0..dim {
            let acc = (model.kp[k] * (goal[k] - x[k]) - tau * model.kv[k] * v[k] + s * amplitude[k] * f[k]) / (tau * tau);
            v[k] += dt * acc;
            x[k] += dt * v[k];
        }
        if x.iter().chain(&v).any(|z| !z.is_finite()) {
            return Err(Error::DivergedRollout(n));
        }
    }
    Trajectory::new(times, positions, velocities, dim)
}

/// Learns from `demo` with `theta` and generalizes towards the start and end of `c`.
///
/// The output is resampled to [`ENCODER_POINTS`] samples on the demo's time span.
pub fn adapt_dmp(demo: &Demonstration, c: &Constraints, theta: &Hyperparams, cfg: &DmpConfig) -> Result<Trajectory> {
    let traj = &demo.trajectory;
    if c.len() > 2 {
        return Err(Error::UnsupportedConstraint("via-points are not supported".into()));
    }
    if c.len() < 2 {
        return Err(Error::UnsupportedConstraint("a start point and an end point are required".into()));
    }
    c.check_against(traj.start_time(), traj.end_time(), traj.dim())?;
    let (start, end) = (c.first().unwrap(), c.last().unwrap());
    let tol = 1e-9 * traj.duration().max(1.0);
    if (start.time - traj.start_time()).abs() > tol || (end.time - traj.end_time()).abs() > tol {
        return Err(Error::UnsupportedConstraint("start/end must sit at the demonstration's first/last time".into()));
    }
    let model = DmpModel::learn(demo, theta, cfg)?;
    let dt = model.tau / (traj.len() - 1) as f64;
    let out = rollout(&model, &start.position, &end.position, model.tau, dt)?;
    let shifted: Vec<f64> = out.times().iter().map(|t| t + traj.start_time()).collect();
    let out = Trajectory::new(shifted, out.positions().to_vec(), out.velocities().to_vec(), out.dim())?;
    resample(&out, ENCODER_POINTS)
}
