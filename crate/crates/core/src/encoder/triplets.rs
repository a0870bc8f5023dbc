use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dmp::{adapt_dmp, DmpConfig};
use crate::error::{Error, Result};
use crate::gmm::{extract_reference, EmOptions, ProbRefTrajectory};
use crate::hyperopt::Bounds;
use crate::kmp::adapt_kmp;
use crate::metrics::shape_distortion;
use crate::par;
use crate::trajectory::{resample, ConstraintPoint, Constraints, Demonstration, Trajectory, ENCODER_POINTS};

/// Anchor with a shape-preserving and a shape-breaking adaptation of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: Trajectory,
    pub positive: Trajectory,
    pub negative: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Positives must score strictly below this shape distortion.
    pub positive_max: f64,
    /// Negatives must score strictly above this shape distortion.
    pub negative_min: f64,
    /// Endpoint perturbation half-range, relative to the anchor diagonal.
    pub endpoint_shift: f64,
    /// Largest bump amplitude, relative to the anchor diagonal.
    pub bump_amplitude: f64,
    pub max_attempts: usize,
    /// Samples of the probabilistic reference used for kernelized negatives.
    pub reference_points: usize,
    /// Hyperparameter box sampled uniformly for negatives.
    pub bounds: Bounds,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            positive_max: 0.05,
            negative_min: 0.15,
            endpoint_shift: 0.15,
            bump_amplitude: 0.03,
            max_attempts: 100,
            reference_points: 100,
            bounds: Bounds::default(),
        }
    }
}

struct Source<'a> {
    demos: &'a [Demonstration],
    reference: Option<(ProbRefTrajectory, Trajectory)>,
}

/// Synthesizes `m` labeled triplets from groups of demonstrations of the same
/// shape. Even indices adapt a single demonstration with a DMP, odd indices
/// adapt the group's probabilistic reference with a KMP. Each index draws from
/// its own random stream, so the output is independent of scheduling.
pub fn generate_triplets(
    groups: &[Vec<Demonstration>],
    m: usize,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<Vec<Triplet>> {
    if m == 0 {
        return Err(Error::InvalidArgument("at least one triplet must be requested".into()));
    }
    if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidArgument("demonstration groups must be nonempty".into()));
    }
    let em = EmOptions::default();
    let references = par::map(groups, |g| -> Result<Option<(ProbRefTrajectory, Trajectory)>> {
        if g.len() < 2 {
            return Ok(None);
        }
        let r = extract_reference(g, opts.reference_points, &em)?;
        let mean = resample(&r.mean_trajectory()?, ENCODER_POINTS)?;
        Ok(Some((r, mean)))
    });
    let sources = groups
        .iter()
        .zip(references)
        .map(|(g, r)| Ok(Source { demos: g, reference: r? }))
        .collect::<Result<Vec<_>>>()?;
    par::map_range(m, |i| synthesize(&sources, i, seed, opts)).into_iter().collect()
}

fn synthesize(sources: &[Source<'_>], index: usize, seed: u64, opts: &SynthesisOptions) -> Result<Triplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let source = &sources[rng.random_range(0..sources.len())];
    let use_kmp = index % 2 == 1 && source.reference.is_some();
    let demo = &source.demos[rng.random_range(0..source.demos.len())];
    let demo = Demonstration::new(resample(&demo.trajectory, ENCODER_POINTS)?, demo.label.clone())?;
    let anchor = match (&source.reference, use_kmp) {
        (Some((_, mean)), true) => mean.clone(),
        _ => demo.trajectory.clone(),
    };
    let diag = anchor.bbox_diagonal();
    let dim = anchor.dim();

    let mut attempts = 0;
    let mut positive = None;
    while attempts < opts.max_attempts {
        attempts += 1;
        let shift = |rng: &mut ChaCha8Rng, p: &[f64]| -> Vec<f64> {
            p.iter().map(|x| x + opts.endpoint_shift * diag * rng.random_range(-1.0..=1.0)).collect()
        };
        let start = shift(&mut rng, anchor.first_position());
        let end = shift(&mut rng, anchor.last_position());
        let Some(candidate) = shape_preserving(&anchor, &start, &end, &mut rng, opts) else { continue };
        if matches!(shape_distortion(&anchor, &candidate), Ok(d) if d < opts.positive_max) {
            positive = Some((candidate, start, end));
            break;
        }
    }
    let Some((positive, start, end)) = positive else {
        return Err(Error::CannotSynthesize(format!("triplet {index}: no positive within {attempts} attempts")));
    };

    let (t0, t1) = (anchor.start_time(), anchor.end_time());
    let mut points = vec![ConstraintPoint::at(t0, start), ConstraintPoint::at(t1, end)];
    if use_kmp {
        let tv = t0 + (t1 - t0) * rng.random_range(0.3..0.7);
        points.push(ConstraintPoint::at(tv, positive.sample_at(tv).0));
    }
    let constraints = Constraints::new(points)?;
    while attempts < opts.max_attempts {
        attempts += 1;
        let theta = opts.bounds.from_unit([rng.random::<f64>(), rng.random::<f64>()]);
        let adapted = match &source.reference {
            Some((reference, _)) if use_kmp => adapt_kmp(reference, &constraints, &theta),
            _ => adapt_dmp(&demo, &constraints, &theta, &DmpConfig::default()),
        };
        let Ok(adapted) = adapted.and_then(|a| Trajectory::from_positions(a.times().to_vec(), a.positions().to_vec(), dim))
        else {
            continue;
        };
        if matches!(shape_distortion(&anchor, &adapted), Ok(d) if d > opts.negative_min) {
            return Ok(Triplet { anchor, positive, negative: adapted });
        }
    }
    Err(Error::CannotSynthesize(format!("triplet {index}: no negative within {} attempts", opts.max_attempts)))
}

/// Similarity transform of `anchor` taking its endpoints to `start` and `end`,
/// plus a compactly supported bump in a random direction.
fn shape_preserving(
    anchor: &Trajectory,
    start: &[f64],
    end: &[f64],
    rng: &mut ChaCha8Rng,
    opts: &SynthesisOptions,
) -> Option<Trajectory> {
    let dim = anchor.dim();
    let p0 = anchor.first_position();
    let p1 = anchor.last_position();
    let src: Vec<f64> = (0..dim).map(|k| p1[k] - p0[k]).collect();
    let dst: Vec<f64> = (0..dim).map(|k| end[k] - start[k]).collect();
    let (ns, nd) = (norm(&src), norm(&dst));
    if ns <= 0.0 || nd <= 0.0 {
        return None;
    }
    let scale = nd / ns;
    let rotation = rotation_between(&src, &dst)?;

    let mut direction: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let dn = norm(&direction);
    if dn <= 1e-6 {
        return None;
    }
    direction.iter_mut().for_each(|v| *v /= dn);
    let amplitude = opts.bump_amplitude * anchor.bbox_diagonal() * scale * rng.random_range(0.0..=1.0);
    let centre = rng.random_range(0.25..0.75);
    let half_width = rng.random_range(0.1..0.2);
    let (t0, span) = (anchor.start_time(), anchor.duration());

    anchor
        .map_positions(|n, x| {
            let u = (anchor.times()[n] - t0) / span;
            let d = (u - centre) / half_width;
            let bump = if d.abs() < 1.0 { (0.5 * (1.0 + (std::f64::consts::PI * d).cos())).powi(2) } else { 0.0 };
            (0..dim)
                .map(|j| {
                    let rotated: f64 = (0..dim).map(|k| rotation[j * dim + k] * (x[k] - p0[k])).sum();
                    start[j] + scale * rotated + amplitude * bump * direction[j]
                })
                .collect()
        })
        .ok()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Row-major rotation taking the direction of `from` onto that of `to`, built
/// as a product of two reflections.
fn rotation_between(from: &[f64], to: &[f64]) -> Option<Vec<f64>> {
    let dim = from.len();
    let u: Vec<f64> = from.iter().map(|x| x / norm(from)).collect();
    let w: Vec<f64> = to.iter().map(|x| x / norm(to)).collect();
    let mid: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
    let nm = norm(&mid);
    if nm < 1e-9 {
        if dim == 1 {
            return Some(vec![-1.0]);
        }
        return None;
    }
    let m: Vec<f64> = mid.iter().map(|x| x / nm).collect();
    let reflect = |v: &[f64], x: &[f64]| -> Vec<f64> {
        let dot: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
        x.iter().zip(v).map(|(xi, vi)| xi - 2.0 * dot * vi).collect()
    };
    let mut r = vec![0.0; dim * dim];
    for k in 0..dim {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        let col = reflect(&w, &reflect(&m, &e));
        for j in 0..dim {
            r[j * dim + k] = col[j];
        }
    }
    Some(r)
}
