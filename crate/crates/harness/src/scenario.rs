//! One adaptation problem: a letter, a primitive, and the desired points.

use std::path::Path;

use anyhow::{bail, Context};
use autolfd_core::encoder::EncoderParams;
use autolfd_core::gmm::{extract_reference, EmOptions, ProbRefTrajectory};
use autolfd_core::kmp::nearest_index;
use autolfd_core::letters::synth_letters;
use autolfd_core::metrics::{latent_metric, mle_cost, mse, MetricReport};
use autolfd_core::trajectory::{ensure_len, load_demonstrations, resample};
use autolfd_core::{
    adapt_dmp, adapt_kmp, ConstraintPoint, Constraints, Demonstration, DmpConfig, Hyperparams, Trajectory,
    ENCODER_POINTS,
};

use crate::config::{ConstraintSpec, ExperimentConfig, Method, MetricKind};

/// Reference samples used for kernelized adaptation.
pub const REFERENCE_POINTS: usize = 100;

/// Demonstrations grouped by letter, in catalog order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub groups: Vec<(char, Vec<Demonstration>)>,
}

impl Corpus {
    pub fn synthesize(letters: &[char], per_letter: usize, seed: u64) -> anyhow::Result<Self> {
        let groups = letters
            .iter()
            .map(|&l| Ok((l.to_ascii_uppercase(), synth_letters(l, per_letter, seed)?)))
            .collect::<anyhow::Result<_>>()?;
        Ok(Corpus { groups })
    }

    /// Reads `<LETTER>.csv` files written by `gen-data`.
    pub fn load(dir: &Path, letters: &[char]) -> anyhow::Result<Self> {
        let groups = letters
            .iter()
            .map(|&l| {
                let l = l.to_ascii_uppercase();
                let path = dir.join(format!("{l}.csv"));
                let demos = load_demonstrations(&path).with_context(|| format!("loading {}", path.display()))?;
                Ok((l, demos))
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(Corpus { groups })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> anyhow::Result<Self> {
        match &cfg.corpus {
            Some(dir) => Self::load(dir, &cfg.letters),
            None => Self::synthesize(&cfg.letters, cfg.demos_per_letter, cfg.corpus_seed),
        }
    }

    pub fn letter(&self, letter: char) -> anyhow::Result<&[Demonstration]> {
        let letter = letter.to_ascii_uppercase();
        match self.groups.iter().find(|(l, _)| *l == letter) {
            Some((_, demos)) => Ok(demos),
            None => bail!("letter '{letter}' is not in the corpus"),
        }
    }

    pub fn demo_groups(&self) -> Vec<Vec<Demonstration>> {
        self.groups.iter().map(|(_, d)| d.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub method: Method,
    pub letter: char,
    /// First demonstration of the letter on the encoder grid.
    pub demo: Demonstration,
    pub reference: ProbRefTrajectory,
    /// Trajectory adaptations are compared against.
    pub anchor: Trajectory,
    pub constraints: Constraints,
}

impl Scenario {
    pub fn build(corpus: &Corpus, letter: char, method: Method, spec: &ConstraintSpec) -> anyhow::Result<Self> {
        let demos = corpus.letter(letter)?;
        let first = &demos[0];
        let demo = Demonstration::new(resample(&first.trajectory, ENCODER_POINTS)?, first.label.clone())?;
        let reference = extract_reference(demos, REFERENCE_POINTS, &EmOptions::default())?;
        let anchor = match method {
            Method::Dmp => demo.trajectory.clone(),
            Method::Kmp => resample(&reference.mean_trajectory()?, ENCODER_POINTS)?,
        };
        let snap = match method {
            Method::Dmp => None,
            Method::Kmp => Some(reference.times.as_slice()),
        };
        let constraints = build_constraints(&anchor, spec, snap)?;
        Ok(Scenario { method, letter: letter.to_ascii_uppercase(), demo, reference, anchor, constraints })
    }

    pub fn from_config(corpus: &Corpus, cfg: &ExperimentConfig) -> anyhow::Result<Self> {
        Self::build(corpus, cfg.letter, cfg.method, &cfg.constraint_spec())
    }

    pub fn adapt(&self, theta: &Hyperparams) -> autolfd_core::Result<Trajectory> {
        match self.method {
            Method::Dmp => adapt_dmp(&self.demo, &self.constraints, theta, &DmpConfig::default()),
            Method::Kmp => adapt_kmp(&self.reference, &self.constraints, theta),
        }
    }

    /// Cost of an adapted trajectory under `metric`.
    pub fn score(
        &self,
        traj: &Trajectory,
        metric: MetricKind,
        encoder: Option<&EncoderParams>,
    ) -> autolfd_core::Result<f64> {
        match metric {
            MetricKind::Latent => {
                let enc = encoder.ok_or_else(|| {
                    autolfd_core::Error::InvalidArgument("the latent metric needs a trained encoder".into())
                })?;
                latent_metric(enc, &self.anchor, traj)
            }
            MetricKind::Mse => mse(&self.anchor, traj),
            MetricKind::Mle => mle_cost(&self.reference, &ensure_len(traj, self.reference.len())?),
        }
    }

    pub fn cost(
        &self,
        theta: &Hyperparams,
        metric: MetricKind,
        encoder: Option<&EncoderParams>,
    ) -> autolfd_core::Result<f64> {
        self.score(&self.adapt(theta)?, metric, encoder)
    }

    pub fn report(&self, traj: &Trajectory, encoder: Option<&EncoderParams>) -> autolfd_core::Result<MetricReport> {
        MetricReport::evaluate(&self.anchor, traj, Some(&self.reference), encoder)
    }

    /// Distance from each desired point to the trajectory at its time, relative
    /// to the anchor's bounding-box diagonal.
    pub fn constraint_errors(&self, traj: &Trajectory) -> Vec<f64> {
        let diag = self.anchor.bbox_diagonal();
        self.constraints
            .points()
            .iter()
            .map(|c| {
                let (p, _) = traj.sample_at(c.time);
                p.iter().zip(&c.position).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / diag
            })
            .collect()
    }
}

fn rotate(v: &[f64], deg: f64) -> Vec<f64> {
    if v.len() != 2 || deg == 0.0 {
        return v.to_vec();
    }
    let (s, c) = deg.to_radians().sin_cos();
    vec![c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn pad(v: &[f64], dim: usize) -> Vec<f64> {
    (0..dim).map(|k| v.get(k).copied().unwrap_or(0.0)).collect()
}

/// Desired points for `anchor`; via times snap to `snap` when given.
pub fn build_constraints(anchor: &Trajectory, spec: &ConstraintSpec, snap: Option<&[f64]>) -> anyhow::Result<Constraints> {
    match spec {
        ConstraintSpec::Points { points } => Ok(Constraints::new(points.clone())?),
        ConstraintSpec::Similarity { scale, rotation_deg, shift, via, via_offset } => {
            let dim = anchor.dim();
            let diag = anchor.bbox_diagonal();
            let x0 = anchor.first_position().to_vec();
            let shift = pad(shift, dim);
            let offset = pad(via_offset, dim);
            let map = |x: &[f64]| -> Vec<f64> {
                let rel: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
                let rot = rotate(&rel, *rotation_deg);
                (0..dim).map(|k| x0[k] + shift[k] * diag + scale * rot[k]).collect()
            };
            let (t0, t1) = (anchor.start_time(), anchor.end_time());
            let mut points = vec![
                ConstraintPoint::at(t0, map(anchor.first_position())),
                ConstraintPoint::at(t1, map(anchor.last_position())),
            ];
            for &f in via {
                if !(f > 0.0 && f < 1.0) {
                    bail!("via fractions must lie strictly inside (0, 1), got {f}");
                }
                let mut t = t0 + f * (t1 - t0);
                if let Some(grid) = snap {
                    t = grid[nearest_index(grid, t)];
                }
                let mut p = map(&anchor.sample_at(t).0);
                for k in 0..dim {
                    p[k] += offset[k] * diag;
                }
                points.push(ConstraintPoint::at(t, p));
            }
            Ok(Constraints::new(points)?)
        }
    }
}
