use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use autolfd_core::encoder::TrainConfig;
use autolfd_core::Hyperparams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dmp,
    Kmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Gd,
    Bo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Latent,
    Mse,
    Mle,
}

/// Named starting points for the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPreset {
    Good,
    Adversarial,
}

/// Desired points derived from the anchor trajectory.
///
/// Start, end and every via fraction are mapped through
/// `x -> x0 + shift * diag + scale * R(rotation) (x - x0)`; via points are then
/// displaced by `via_offset * diag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintSpec {
    Similarity {
        scale: f64,
        #[serde(default)]
        rotation_deg: f64,
        #[serde(default)]
        shift: Vec<f64>,
        #[serde(default)]
        via: Vec<f64>,
        #[serde(default)]
        via_offset: Vec<f64>,
    },
    /// Absolute points; times are in the anchor's time frame.
    Points { points: Vec<autolfd_core::ConstraintPoint> },
}

impl ConstraintSpec {
    /// Enlarged, shifted goal with the start kept in place.
    pub fn shifted_goal() -> Self {
        ConstraintSpec::Similarity {
            scale: 1.25,
            rotation_deg: 0.0,
            shift: vec![0.0, 0.0],
            via: vec![],
            via_offset: vec![],
        }
    }

    /// Translated start and end with one via-point halfway.
    pub fn start_via_end() -> Self {
        ConstraintSpec::Similarity {
            scale: 1.0,
            rotation_deg: 0.0,
            shift: vec![0.08, -0.06],
            via: vec![0.5],
            via_offset: vec![],
        }
    }

    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Dmp => Self::shifted_goal(),
            Method::Kmp => Self::start_via_end(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub optimizer: Optimizer,
    pub metric: MetricKind,
    pub letter: char,
    /// Defaults per method when absent.
    pub constraints: Option<ConstraintSpec>,
    pub seed: u64,
    /// Seeds `seed, seed + 1, ...` used by the comparison study.
    pub compare_seeds: usize,
    pub budget: usize,
    pub gd_steps: usize,
    pub gd_learning_rate: f64,
    pub init: InitPreset,
    /// Overrides the named init preset.
    pub init_theta: Option<Hyperparams>,
    pub encoder: Option<PathBuf>,
    /// Directory of letter CSVs; synthesized from `corpus_seed` when absent.
    pub corpus: Option<PathBuf>,
    pub corpus_seed: u64,
    pub demos_per_letter: usize,
    pub letters: Vec<char>,
    pub triplets: usize,
    pub train: TrainConfig,
    /// Cells per axis of the metric-failure sweep.
    pub grid: usize,
    /// Letters swept by `metric-failure` with DMP + MSE and KMP + MLE.
    pub failure_dmp_letter: char,
    pub failure_kmp_letter: char,
    /// Not recorded in the written config, so outputs do not depend on where they land.
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Dmp,
            optimizer: Optimizer::Bo,
            metric: MetricKind::Latent,
            letter: 'A',
            constraints: None,
            seed: 0,
            compare_seeds: 3,
            budget: 100,
            gd_steps: 30,
            gd_learning_rate: 0.5,
            init: InitPreset::Adversarial,
            init_theta: None,
            encoder: None,
            corpus: None,
            corpus_seed: 0,
            demos_per_letter: 10,
            letters: autolfd_core::letters::letter_catalog(),
            triplets: 3026,
            train: TrainConfig::desk(),
            grid: 20,
            failure_dmp_letter: 'A',
            failure_kmp_letter: 'G',
            out: PathBuf::from("out"),
        }
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        cfg.letter = cfg.letter.to_ascii_uppercase();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.budget == 0 || self.gd_steps == 0 || self.grid < 2 || self.compare_seeds == 0 {
            bail!("budgets, grid size and seed count must be positive");
        }
        if self.demos_per_letter < 2 {
            bail!("at least two demonstrations per letter are required");
        }
        if self.triplets == 0 {
            bail!("triplet count must be positive");
        }
        for p in [&self.encoder, &self.corpus].into_iter().flatten() {
            if !p.exists() {
                bail!("referenced path {} does not exist", p.display());
            }
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn constraint_spec(&self) -> ConstraintSpec {
        self.constraints.clone().unwrap_or_else(|| ConstraintSpec::default_for(self.method))
    }

    pub fn init_theta(&self) -> Hyperparams {
        self.init_theta.unwrap_or_else(|| init_preset(self.method, self.init))
    }

    /// Writes the resolved configuration next to the outputs.
    pub fn write_resolved(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// `(log10 k_h, log10 lambda)` starting points.
pub fn init_preset(method: Method, preset: InitPreset) -> Hyperparams {
    match (method, preset) {
        (Method::Dmp, InitPreset::Good) => Hyperparams::new(3.0, -4.0),
        (Method::Dmp, InitPreset::Adversarial) => Hyperparams::new(-1.5, 1.5),
        (Method::Kmp, InitPreset::Good) => Hyperparams::new(2.0, -2.0),
        (Method::Kmp, InitPreset::Adversarial) => Hyperparams::new(-1.5, 1.5),
    }
}
