//! Outer-loop search over `(k_h, lambda)` in log10 space: projected gradient
//! descent on central finite differences, and Bayesian optimization with a
//! Matérn-5/2 surrogate and expected improvement.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::cholesky_with_jitter;
use crate::par;

/// Kernel width and regularization, stored as base-10 logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub log10_kh: f64,
    pub log10_lambda: f64,
}

impl Hyperparams {
    pub fn new(log10_kh: f64, log10_lambda: f64) -> Self {
        Hyperparams { log10_kh, log10_lambda }
    }

    pub fn k_h(&self) -> f64 {
        10f64.powf(self.log10_kh)
    }

    pub fn lambda(&self) -> f64 {
        10f64.powf(self.log10_lambda)
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.log10_kh, self.log10_lambda]
    }

    pub fn from_array(v: [f64; 2]) -> Self {
        Hyperparams::new(v[0], v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub log10_kh: (f64, f64),
    pub log10_lambda: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { log10_kh: (-2.0, 6.0), log10_lambda: (-8.0, 2.0) }
    }
}

impl Bounds {
    pub fn lower(&self) -> [f64; 2] {
        [self.log10_kh.0, self.log10_lambda.0]
    }

    pub fn upper(&self) -> [f64; 2] {
        [self.log10_kh.1, self.log10_lambda.1]
    }

    pub fn contains(&self, theta: &Hyperparams) -> bool {
        let v = theta.to_array();
        (0..2).all(|i| v[i] >= self.lower()[i] && v[i] <= self.upper()[i])
    }

    /// Clamps into the box shrunk by `margin` on every side.
    pub fn project(&self, theta: &Hyperparams, margin: f64) -> Hyperparams {
        let v = theta.to_array();
        let (lo, hi) = (self.lower(), self.upper());
        Hyperparams::from_array([0, 1].map(|i| v[i].clamp(lo[i] + margin, hi[i] - margin)))
    }

    /// Maps a point of the unit square onto the box.
    pub fn from_unit(&self, u: [f64; 2]) -> Hyperparams {
        let (lo, hi) = (self.lower(), self.upper());
        Hyperparams::from_array([0, 1].map(|i| lo[i] + u[i] * (hi[i] - lo[i])))
    }

    pub fn to_unit(&self, theta: &Hyperparams) -> [f64; 2] {
        let v = theta.to_array();
        let (lo, hi) = (self.lower(), self.upper());
        [0, 1].map(|i| (v[i] - lo[i]) / (hi[i] - lo[i]))
    }

    pub fn center(&self) -> Hyperparams {
        self.from_unit([0.5, 0.5])
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.lower(), self.upper());
        if (0..2).any(|i| !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid bounds {self:?}")));
        }
        Ok(())
    }
}

fn finite_cost<F>(loss: &F, theta: &Hyperparams) -> Option<f64>
where
    F: Fn(&Hyperparams) -> Result<f64>,
{
    loss(theta).ok().filter(|c| c.is_finite())
}

/// Central-difference gradient in log10 coordinates.
pub fn fd_gradient<F>(loss: &F, theta: &Hyperparams, step: f64, bounds: &Bounds) -> Result<[f64; 2]>
where
    F: Fn(&Hyperparams) -> Result<f64> + Sync + Send,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")));
    }
    let base = theta.to_array();
    let stencil: Vec<Hyperparams> = (0..4)
        .map(|k| {
            let mut v = base;
            v[k / 2] += if k % 2 == 0 { step } else { -step };
            Hyperparams::from_array(v)
        })
        .collect();
    if let Some(p) = stencil.iter().find(|p| !bounds.contains(p)) {
        return Err(Error::InvalidArgument(format!("finite-difference stencil point {p:?} leaves the bounds")));
    }
    let values = par::map(&stencil, |p| finite_cost(loss, p));
    let mut grad = [0.0; 2];
    for i in 0..2 {
        match (values[2 * i], values[2 * i + 1]) {
            (Some(plus), Some(minus)) => grad[i] = (plus - minus) / (2.0 * step),
            _ => {
                let bad = if values[2 * i].is_none() { stencil[2 * i] } else { stencil[2 * i + 1] };
                return Err(Error::NonFinite(format!("loss at {bad:?}")));
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub theta: Hyperparams,
    pub cost: f64,
    /// The evaluation failed and `cost` is a substituted penalty.
    #[serde(default)]
    pub penalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdOptions {
    pub learning_rate: f64,
    pub steps: usize,
    pub fd_step: f64,
    pub max_halvings: usize,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions { learning_rate: 0.5, steps: 30, fd_step: 1e-3, max_halvings: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdResult {
    pub theta: Hyperparams,
    pub cost: f64,
    /// Initial point followed by the accepted point after every step.
    pub history: Vec<Observation>,
}

/// Projected gradient descent with step halving whenever a step would increase the cost.
pub fn gd_optimize<F>(loss: &F, theta0: &Hyperparams, opts: &GdOptions, bounds: &Bounds) -> Result<GdResult>
where
    F: Fn(&Hyperparams) -> Result<f64> + Sync + Send,
{
    bounds.validate()?;
    if !bounds.contains(theta0) {
        return Err(Error::InvalidArgument(format!("initial point {theta0:?} outside bounds")));
    }
    if !(opts.learning_rate >= 0.0) {
        return Err(Error::InvalidArgument("learning rate must be non-negative".into()));
    }
    // keep the stencil inside the box
    let margin = opts.fd_step * (1.0 + 1e-9);
    let mut theta = bounds.project(theta0, margin);
    let mut cost = finite_cost(loss, &theta).ok_or_else(|| Error::NonFinite(format!("loss at {theta:?}")))?;
    let mut history = vec![Observation { theta, cost, penalized: false }];
    let mut eta = opts.learning_rate;
    for _ in 0..opts.steps {
        let grad = fd_gradient(loss, &theta, opts.fd_step, bounds)?;
        let base = theta.to_array();
        for _ in 0..=opts.max_halvings {
            let candidate = bounds.project(
                &Hyperparams::from_array([base[0] - eta * grad[0], base[1] - eta * grad[1]]),
                margin,
            );
            match finite_cost(loss, &candidate) {
                Some(c) if c <= cost => {
                    theta = candidate;
                    cost = c;
                    break;
                }
                _ => eta *= 0.5,
            }
        }
        history.push(Observation { theta, cost, penalized: false });
    }
    Ok(GdResult { theta, cost, history })
}

/// Matérn-5/2 correlation at scaled distance `r`.
pub fn matern52(r: f64) -> f64 {
    let a = 5f64.sqrt() * r;
    (1.0 + a + a * a / 3.0) * (-a).exp()
}

pub const SURROGATE_NOISE: f64 = 1e-6;
const GRID_SIZE: usize = 10;
const LENGTH_SCALE_RANGE: (f64, f64) = (0.03, 3.0);

/// Gaussian-process surrogate of the cost over the unit-scaled search box.
#[derive(Debug, Clone)]
pub struct Surrogate {
    bounds: Bounds,
    inputs: Vec<[f64; 2]>,
    y_mean: f64,
    y_scale: f64,
    pub length_scales: [f64; 2],
    pub signal_variance: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn correlation(a: &[f64; 2], b: &[f64; 2], ls: &[f64; 2]) -> f64 {
    let r = (((a[0] - b[0]) / ls[0]).powi(2) + ((a[1] - b[1]) / ls[1]).powi(2)).sqrt();
    matern52(r)
}

/// Log-spaced length-scale grid shared by both input dimensions.
pub fn length_scale_grid() -> Vec<f64> {
    let (lo, hi) = LENGTH_SCALE_RANGE;
    (0..GRID_SIZE)
        .map(|i| lo * (hi / lo).powf(i as f64 / (GRID_SIZE - 1) as f64))
        .collect()
}

impl Surrogate {
    /// Selects per-dimension length scales on a 10x10 log grid by maximum
    /// marginal likelihood, with the signal variance profiled out in closed form.
    pub fn fit(obs: &[Observation], bounds: &Bounds) -> Result<Self> {
        if obs.len() < 2 {
            return Err(Error::InvalidArgument("surrogate needs at least two observations".into()));
        }
        let inputs: Vec<[f64; 2]> = obs.iter().map(|o| bounds.to_unit(&o.theta)).collect();
        if inputs.iter().all(|x| x == &inputs[0]) {
            return Err(Error::Degenerate("all observations share the same input".into()));
        }
        let n = obs.len();
        let y: Vec<f64> = obs.iter().map(|o| o.cost).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation cost".into()));
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let z = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));

        let grid = length_scale_grid();
        let mut best: Option<(f64, [f64; 2], Cholesky<f64, Dyn>, DVector<f64>, f64)> = None;
        for &l0 in &grid {
            for &l1 in &grid {
                let ls = [l0, l1];
                let mut r = DMatrix::from_fn(n, n, |i, j| correlation(&inputs[i], &inputs[j], &ls));
                for i in 0..n {
                    r[(i, i)] += SURROGATE_NOISE;
                }
                let Ok((chol, _)) = cholesky_with_jitter(&r, "surrogate") else { continue };
                let alpha = chol.solve(&z);
                let sigma2 = (z.dot(&alpha) / n as f64).max(1e-300);
                let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let ll = -0.5 * n as f64 * sigma2.ln() - 0.5 * log_det;
                if best.as_ref().is_none_or(|b| ll > b.0) {
                    best = Some((ll, ls, chol, alpha, sigma2));
                }
            }
        }
        let (_, length_scales, chol, alpha, signal_variance) =
            best.ok_or_else(|| Error::IllConditioned("surrogate Gram matrix".into()))?;
        Ok(Surrogate { bounds: *bounds, inputs, y_mean, y_scale, length_scales, signal_variance, chol, alpha })
    }

    /// Predictive mean and standard deviation of the cost at `theta`.
    pub fn predict(&self, theta: &Hyperparams) -> (f64, f64) {
        let x = self.bounds.to_unit(theta);
        let r = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| correlation(&x, xi, &self.length_scales)),
        );
        let mean = self.y_mean + self.y_scale * r.dot(&self.alpha);
        let v = self.chol.solve(&r);
        let var = self.signal_variance * (1.0 - r.dot(&v)).max(0.0);
        (mean, self.y_scale * var.sqrt())
    }
}

pub fn surrogate_fit(obs: &[Observation], bounds: &Bounds) -> Result<Surrogate> {
    Surrogate::fit(obs, bounds)
}

/// Closed-form `E[max(incumbent - L, 0)]` for `L ~ N(mean, stddev^2)`.
pub fn expected_improvement(mean: f64, stddev: f64, incumbent: f64) -> f64 {
    let gain = incumbent - mean;
    if !(stddev > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / stddev;
    let normal = Normal::standard();
    (gain * normal.cdf(z) + stddev * normal.pdf(z)).max(0.0)
}

/// Latin hypercube of `n` points in the unit square.
pub fn latin_hypercube(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut columns: Vec<Vec<usize>> = (0..2)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    let strata = columns.iter_mut().map(std::mem::take).collect::<Vec<_>>();
    (0..n)
        .map(|i| [0, 1].map(|d| (strata[d][i] as f64 + rng.random::<f64>()) / n as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoOptions {
    pub budget: usize,
    pub initial_design: usize,
    pub candidates: usize,
    pub seed: u64,
}

impl Default for BoOptions {
    fn default() -> Self {
        BoOptions { budget: 100, initial_design: 8, candidates: 1000, seed: 0 }
    }
}

/// Evaluated points in query order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub observations: Vec<Observation>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Lowest cost observation (first one on ties).
    pub fn incumbent(&self) -> Option<&Observation> {
        self.observations.iter().reduce(|best, o| if o.cost < best.cost { o } else { best })
    }

    /// Running minimum of the cost after each observation.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        self.observations
            .iter()
            .scan(f64::INFINITY, |best, o| {
                *best = best.min(o.cost);
                Some(*best)
            })
            .collect()
    }

    fn worst_finite(&self) -> Option<f64> {
        self.observations
            .iter()
            .filter(|o| !o.penalized)
            .map(|o| o.cost)
            .reduce(f64::max)
    }
}

/// CSV trace `iter,log10_kh,log10_lambda,cost,incumbent` of a sequence of observations.
pub fn trace_csv(observations: &[Observation]) -> String {
    let mut out = String::from("iter,log10_kh,log10_lambda,cost,incumbent\n");
    let mut best = f64::INFINITY;
    for (i, o) in observations.iter().enumerate() {
        best = best.min(o.cost);
        writeln!(out, "{i},{},{},{},{}", o.theta.log10_kh, o.theta.log10_lambda, o.cost, best).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    pub theta: Hyperparams,
    pub cost: f64,
    pub observations: ObservationSet,
}

fn penalty(obs: &ObservationSet) -> f64 {
    match obs.worst_finite() {
        Some(w) if w > 0.0 => 10.0 * w,
        Some(_) => 1.0,
        None => 1e6,
    }
}

/// Bayesian optimization: seeded Latin-hypercube design, then repeatedly fit
/// the surrogate and evaluate the best of `candidates` random points by
/// expected improvement.
pub fn bo_optimize<F>(loss: &F, bounds: &Bounds, opts: &BoOptions) -> Result<BoResult>
where
    F: Fn(&Hyperparams) -> Result<f64> + Sync + Send,
{
    bo_optimize_from(loss, bounds, opts, &[])
}

/// [`bo_optimize`] with `initial` evaluated first; they count against the budget.
pub fn bo_optimize_from<F>(loss: &F, bounds: &Bounds, opts: &BoOptions, initial: &[Hyperparams]) -> Result<BoResult>
where
    F: Fn(&Hyperparams) -> Result<f64> + Sync + Send,
{
    bounds.validate()?;
    if let Some(p) = initial.iter().find(|p| !bounds.contains(p)) {
        return Err(Error::InvalidArgument(format!("initial point {p:?} outside bounds")));
    }
    if initial.len() > opts.budget {
        return Err(Error::InvalidArgument("more initial points than budget".into()));
    }
    if opts.initial_design < 2 || opts.budget < opts.initial_design {
        return Err(Error::InvalidArgument(format!(
            "budget {} must cover the initial design of {} (>= 2) points",
            opts.budget, opts.initial_design
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut obs = ObservationSet::default();
    let record = |obs: &mut ObservationSet, theta: Hyperparams| {
        let (cost, penalized) = match finite_cost(loss, &theta) {
            Some(c) => (c, false),
            None => (penalty(obs), true),
        };
        obs.observations.push(Observation { theta, cost, penalized });
    };
    for p in initial {
        record(&mut obs, *p);
    }
    for u in latin_hypercube(opts.initial_design, &mut rng) {
        if obs.len() < opts.budget {
            record(&mut obs, bounds.from_unit(u));
        }
    }
    while obs.len() < opts.budget {
        let surrogate = Surrogate::fit(&obs.observations, bounds)?;
        let incumbent = obs.incumbent().map(|o| o.cost).unwrap();
        let candidates: Vec<Hyperparams> = (0..opts.candidates)
            .map(|_| bounds.from_unit([rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let scores = par::map(&candidates, |c| {
            let (m, s) = surrogate.predict(c);
            expected_improvement(m, s, incumbent)
        });
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        record(&mut obs, candidates[best]);
    }
    let best = *obs.incumbent().unwrap();
    Ok(BoResult { theta: best.theta, cost: best.cost, observations: obs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(t: &Hyperparams) -> Result<f64> {
        Ok((t.log10_kh - 1.0).powi(2) + (t.log10_lambda + 2.0).powi(2))
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let g = fd_gradient(&quadratic, &Hyperparams::new(0.0, 0.0), 1e-3, &Bounds::default()).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        let g = fd_gradient(&quadratic, &Hyperparams::new(1.0, -2.0), 1e-3, &Bounds::default()).unwrap();
        assert!(g[0].hypot(g[1]) <= 1e-8);
        let constant = |_: &Hyperparams| Ok(3.5);
        let g = fd_gradient(&constant, &Hyperparams::new(0.3, -1.0), 1e-3, &Bounds::default()).unwrap();
        assert!(g[0].abs() <= 1e-12 && g[1].abs() <= 1e-12);
    }

    #[test]
    fn fd_gradient_reports_non_finite_point() {
        let bad = |t: &Hyperparams| if t.log10_kh > 0.0 { Ok(f64::NAN) } else { Ok(1.0) };
        let err = fd_gradient(&bad, &Hyperparams::new(0.0, 0.0), 1e-3, &Bounds::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(msg) if msg.contains("0.001")));
    }

    #[test]
    fn gd_converges_on_convex_quadratic() {
        let loss = |t: &Hyperparams| Ok(2.0 * (t.log10_kh - 1.0).powi(2) + 0.5 * (t.log10_lambda + 2.0).powi(2));
        let opts = GdOptions { learning_rate: 0.3, ..Default::default() };
        let res = gd_optimize(&loss, &Hyperparams::new(4.0, 1.0), &opts, &Bounds::default()).unwrap();
        let g = fd_gradient(&loss, &res.theta, 1e-3, &Bounds::default()).unwrap();
        assert!(g[0].hypot(g[1]) <= 1e-4);
        assert_eq!(res.history.len(), 31);
        assert!(res.history.windows(2).all(|w| w[1].cost <= w[0].cost));
    }

    #[test]
    fn gd_zero_learning_rate_is_stationary() {
        let opts = GdOptions { learning_rate: 0.0, steps: 5, ..Default::default() };
        let start = Hyperparams::new(2.0, -3.0);
        let res = gd_optimize(&quadratic, &start, &opts, &Bounds::default()).unwrap();
        assert!(res.history.iter().all(|o| o.theta == start && o.cost == res.history[0].cost));
    }

    #[test]
    fn ei_closed_forms() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0), 0.5);
        assert!((expected_improvement(2.0, 1.0, 2.0) - 0.398_942_280_401_432_7).abs() < 1e-6);
        assert!(expected_improvement(50.0, 1.0, 0.0) >= 0.0);
    }

    #[test]
    fn surrogate_interpolates_and_shrinks_variance() {
        let bounds = Bounds::default();
        let obs: Vec<Observation> = [[0.0, -6.0], [1.0, -1.0], [4.0, -3.0], [-1.0, 1.0], [5.0, -7.0]]
            .iter()
            .map(|v| {
                let theta = Hyperparams::from_array(*v);
                Observation { theta, cost: quadratic(&theta).unwrap(), penalized: false }
            })
            .collect();
        let s = Surrogate::fit(&obs, &bounds).unwrap();
        for o in &obs {
            let (m, sd) = s.predict(&o.theta);
            assert!((m - o.cost).abs() < 1e-3, "{m} vs {}", o.cost);
            let (_, far) = s.predict(&Hyperparams::new(2.0, -3.0));
            assert!(sd <= far);
        }
        let again = Surrogate::fit(&obs, &bounds).unwrap();
        assert_eq!(again.length_scales, s.length_scales);
        assert!(Surrogate::fit(&obs[..1], &bounds).is_err());
        let same = vec![obs[0]; 3];
        assert!(matches!(Surrogate::fit(&same, &bounds), Err(Error::Degenerate(_))));
    }

    #[test]
    fn latin_hypercube_covers_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = latin_hypercube(8, &mut rng);
        for d in 0..2 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[d] * 8.0).floor() as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bo_penalizes_failures_and_continues() {
        let loss = |t: &Hyperparams| {
            if t.log10_lambda > 0.0 {
                Err(Error::IllConditioned("test".into()))
            } else {
                quadratic(t)
            }
        };
        let res = bo_optimize(&loss, &Bounds::default(), &BoOptions { budget: 15, ..Default::default() }).unwrap();
        assert_eq!(res.observations.len(), 15);
        assert!(res.observations.observations.iter().all(|o| o.cost.is_finite()));
        assert!(!res.observations.incumbent().unwrap().penalized);
    }

    #[test]
    fn trace_format() {
        let obs = vec![
            Observation { theta: Hyperparams::new(1.0, -2.0), cost: 3.0, penalized: false },
            Observation { theta: Hyperparams::new(0.5, -1.0), cost: 4.0, penalized: false },
        ];
        assert_eq!(trace_csv(&obs), "iter,log10_kh,log10_lambda,cost,incumbent\n0,1,-2,3,3\n1,0.5,-1,4,3\n");
    }
}
