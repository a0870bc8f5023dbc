//! Subcommand implementations. Each writes its resolved config and artifacts
//! into the configured output directory.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use autolfd_core::encoder::{generate_triplets, train_encoder, EncoderParams, SynthesisOptions};
use autolfd_core::hyperopt::{bo_optimize_from, gd_optimize, trace_csv, BoOptions, GdOptions, Observation};
use autolfd_core::metrics::shape_distortion;
use autolfd_core::par;
use autolfd_core::trajectory::{trajectory_to_csv, write_trajectory_csv};
use autolfd_core::{Bounds, Hyperparams, Trajectory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{init_preset, ConstraintSpec, ExperimentConfig, InitPreset, Method, MetricKind, Optimizer};
use crate::report::{write_json, write_timing, RunReport};
use crate::scenario::{Corpus, Scenario};
use crate::svg::{emit_svg, Series, PALETTE};

/// A run that completed but whose checked outcome did not hold (exit code 2).
#[derive(Debug)]
pub struct AssertionFailure(pub String);

impl fmt::Display for AssertionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AssertionFailure {}

fn prepare(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.write_resolved(dir)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn load_encoder(cfg: &ExperimentConfig) -> anyhow::Result<Option<EncoderParams>> {
    match (&cfg.encoder, cfg.metric) {
        (Some(p), _) => Ok(Some(EncoderParams::load(p).with_context(|| format!("loading encoder {}", p.display()))?)),
        (None, MetricKind::Latent) => Err(anyhow!("the latent metric needs `encoder` in the config")),
        (None, _) => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub demos_per_letter: usize,
    pub files: Vec<FileHash>,
    /// Hash over the per-file hashes in listed order.
    pub corpus_sha256: String,
}

/// Synthesizes the letter corpus from `seed` into `letters/<L>.csv`.
pub fn gen_data(cfg: &ExperimentConfig) -> anyhow::Result<Manifest> {
    let dir = cfg.out.join("letters");
    prepare(cfg, &cfg.out)?;
    std::fs::create_dir_all(&dir)?;
    let corpus = Corpus::synthesize(&cfg.letters, cfg.demos_per_letter, cfg.seed)?;
    let mut files = Vec::new();
    for (letter, demos) in &corpus.groups {
        let text = demos.iter().map(|d| trajectory_to_csv(&d.trajectory)).collect::<Vec<_>>().join("\n");
        let name = format!("{letter}.csv");
        std::fs::write(dir.join(&name), &text)?;
        files.push(FileHash { file: format!("letters/{name}"), sha256: sha256_hex(text.as_bytes()) });
    }
    let joined: String = files.iter().map(|f| f.sha256.as_str()).collect();
    let manifest =
        Manifest { seed: cfg.seed, demos_per_letter: cfg.demos_per_letter, files, corpus_sha256: sha256_hex(joined.as_bytes()) };
    write_json(&manifest, &cfg.out.join("manifest.json"))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub triplets: usize,
    pub train_size: usize,
    pub holdout_size: usize,
    pub epochs: usize,
    pub initial_holdout_accuracy: f64,
    pub holdout_accuracy: f64,
    pub final_loss: f64,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trained on {} triplets for {} epochs: holdout accuracy {:.4} (initial {:.4}), final loss {:.6}",
            self.train_size, self.epochs, self.holdout_accuracy, self.initial_holdout_accuracy, self.final_loss
        )
    }
}

/// Synthesizes triplets from the corpus and trains the encoder on them.
pub fn cmd_train_encoder(cfg: &ExperimentConfig) -> anyhow::Result<TrainSummary> {
    prepare(cfg, &cfg.out)?;
    let clock = Instant::now();
    let corpus = Corpus::from_config(cfg)?;
    let triplets = generate_triplets(&corpus.demo_groups(), cfg.triplets, cfg.seed, &SynthesisOptions::default())?;
    let trained = train_encoder(&triplets, &cfg.train)?;
    trained.params.save(cfg.out.join("encoder.json"))?;
    std::fs::write(cfg.out.join("training_curve.csv"), trained.log.to_csv())?;
    let summary = TrainSummary {
        triplets: triplets.len(),
        train_size: trained.log.train_size,
        holdout_size: trained.log.holdout_size,
        epochs: trained.log.curve.len(),
        initial_holdout_accuracy: trained.log.initial_holdout_accuracy,
        holdout_accuracy: trained.log.holdout_accuracy,
        final_loss: trained.log.curve.last().map_or(f64::NAN, |p| p.loss),
    };
    write_json(&summary, &cfg.out.join("train_summary.json"))?;
    write_timing(&cfg.out, clock.elapsed())?;
    Ok(summary)
}

/// Grid cell of a hyperparameter sweep; `None` scores mark failed adaptations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: Hyperparams,
    pub shape_distortion: Option<f64>,
    pub cost: Option<f64>,
}

/// `grid` evenly spaced values per axis, endpoints included.
pub fn sweep_grid(bounds: &Bounds, grid: usize) -> Vec<Hyperparams> {
    let step = |k: usize| k as f64 / (grid - 1) as f64;
    (0..grid)
        .flat_map(|i| (0..grid).map(move |j| bounds.from_unit([step(i), step(j)])))
        .collect()
}

pub fn sweep(scenario: &Scenario, metric: MetricKind, thetas: &[Hyperparams]) -> Vec<SweepRow> {
    par::map(thetas, |theta| {
        let scored = scenario.adapt(theta).ok().and_then(|traj| {
            let shape = shape_distortion(&scenario.anchor, &traj).ok().filter(|v| v.is_finite())?;
            let cost = scenario.score(&traj, metric, None).ok().filter(|v| v.is_finite())?;
            Some((shape, cost))
        });
        SweepRow { theta: *theta, shape_distortion: scored.map(|s| s.0), cost: scored.map(|s| s.1) }
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("log10_kh,log10_lambda,shape_distortion,cost\n");
    let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
    for r in rows {
        writeln!(out, "{},{},{},{}", r.theta.log10_kh, r.theta.log10_lambda, fmt(r.shape_distortion), fmt(r.cost))
            .unwrap();
    }
    out
}

/// Largest shape distortion still counted as shape-preserving.
pub const PRESERVING_MAX: f64 = 0.05;
/// Smallest shape distortion counted as shape-breaking.
pub const BREAKING_MIN: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionPair {
    /// Shape-preserving adaptation with the highest cost.
    pub preserving: SweepRow,
    /// Shape-breaking adaptation with the lowest cost.
    pub breaking: SweepRow,
}

impl InversionPair {
    pub fn certified(&self) -> bool {
        matches!((self.preserving.cost, self.breaking.cost), (Some(a), Some(b)) if a > b)
    }
}

pub fn find_pair(rows: &[SweepRow]) -> Option<InversionPair> {
    let scored = || rows.iter().filter_map(|r| Some((r, r.shape_distortion?, r.cost?)));
    let preserving = scored()
        .filter(|(_, s, _)| *s <= PRESERVING_MAX)
        .reduce(|best, x| if x.2 > best.2 { x } else { best })?;
    let breaking = scored()
        .filter(|(_, s, _)| *s >= BREAKING_MIN)
        .reduce(|best, x| if x.2 < best.2 { x } else { best })?;
    Some(InversionPair { preserving: *preserving.0, breaking: *breaking.0 })
}

/// One metric-failure study: the primitive, the letter and the baseline metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCase {
    pub name: String,
    pub method: Method,
    pub metric: MetricKind,
    pub letter: char,
    pub constraints: ConstraintSpec,
}

pub fn failure_cases(cfg: &ExperimentConfig) -> Vec<FailureCase> {
    vec![
        FailureCase {
            name: "dmp-mse".into(),
            method: Method::Dmp,
            metric: MetricKind::Mse,
            letter: cfg.failure_dmp_letter.to_ascii_uppercase(),
            constraints: ConstraintSpec::Similarity {
                scale: 2.5,
                rotation_deg: 0.0,
                shift: vec![],
                via: vec![],
                via_offset: vec![],
            },
        },
        FailureCase {
            name: "kmp-mle".into(),
            method: Method::Kmp,
            metric: MetricKind::Mle,
            letter: cfg.failure_kmp_letter.to_ascii_uppercase(),
            constraints: ConstraintSpec::Similarity {
                scale: 1.0,
                rotation_deg: 0.0,
                shift: vec![],
                via: vec![0.5],
                via_offset: vec![0.1, 0.0],
            },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureOutcome {
    pub case: FailureCase,
    pub grid: usize,
    pub pair: Option<InversionPair>,
    pub certified: bool,
}

fn markers(scenario: &Scenario) -> Vec<[f64; 2]> {
    scenario
        .constraints
        .points()
        .iter()
        .map(|c| [c.position[0], c.position.get(1).copied().unwrap_or(0.0)])
        .collect()
}

fn run_failure_case(
    corpus: &Corpus,
    case: &FailureCase,
    grid: usize,
    dir: &Path,
) -> anyhow::Result<(FailureOutcome, Vec<SweepRow>)> {
    std::fs::create_dir_all(dir)?;
    let scenario = Scenario::build(corpus, case.letter, case.method, &case.constraints)?;
    let rows = sweep(&scenario, case.metric, &sweep_grid(&Bounds::default(), grid));
    std::fs::write(dir.join("sweep.csv"), sweep_csv(&rows))?;
    write_trajectory_csv(&scenario.anchor, dir.join("anchor.csv"))?;
    let pair = find_pair(&rows);
    let mut series = vec![Series::from_trajectory("demonstration", PALETTE[0], &scenario.anchor).dashed()];
    if let Some(p) = &pair {
        for (name, row, color) in [("preserving", &p.preserving, PALETTE[1]), ("breaking", &p.breaking, PALETTE[4])] {
            let traj = scenario.adapt(&row.theta)?;
            write_trajectory_csv(&traj, dir.join(format!("{name}.csv")))?;
            let label = format!(
                "{name}: shape {:.3}, cost {:.4}",
                row.shape_distortion.unwrap_or(f64::NAN),
                row.cost.unwrap_or(f64::NAN)
            );
            series.push(Series::from_trajectory(&label, color, &traj));
        }
    }
    emit_svg(&series, &markers(&scenario), &dir.join("overlay.svg"))?;
    let outcome = FailureOutcome { case: case.clone(), grid, certified: pair.is_some_and(|p| p.certified()), pair };
    write_json(&outcome, &dir.join("pair.json"))?;
    Ok((outcome, rows))
}

/// Sweeps the hyperparameter grid for each baseline metric and certifies an
/// adaptation pair whose metric order contradicts its shape order.
pub fn metric_failure(cfg: &ExperimentConfig) -> anyhow::Result<Vec<FailureOutcome>> {
    prepare(cfg, &cfg.out)?;
    let clock = Instant::now();
    let corpus = Corpus::from_config(cfg)?;
    let cases = failure_cases(cfg);
    let results = par::map(&cases, |case| run_failure_case(&corpus, case, cfg.grid, &cfg.out.join(&case.name)));
    let mut outcomes = Vec::new();
    let mut failures = String::new();
    for (case, result) in cases.iter().zip(results) {
        let (outcome, rows) = result?;
        if !outcome.certified {
            writeln!(failures, "no certified inversion for {} on '{}'; sweep:\n{}", case.name, case.letter, sweep_csv(&rows))?;
        }
        outcomes.push(outcome);
    }
    write_json(&outcomes, &cfg.out.join("metric_failure.json"))?;
    write_timing(&cfg.out, clock.elapsed())?;
    if !failures.is_empty() {
        return Err(AssertionFailure(failures).into());
    }
    Ok(outcomes)
}

/// Optimizer choice and starting point of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub optimizer: Optimizer,
    /// Evaluated first by BO; required for descent.
    pub init: Option<Hyperparams>,
    pub seed: u64,
}

/// Runs the outer loop on `scenario` and writes its artifacts into `dir`.
pub fn run_loop(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    encoder: Option<&EncoderParams>,
    plan: &RunPlan,
    dir: &Path,
) -> anyhow::Result<RunReport> {
    std::fs::create_dir_all(dir)?;
    write_json(&scenario.constraints, &dir.join("constraints.json"))?;
    write_trajectory_csv(&scenario.anchor, dir.join("anchor.csv"))?;
    let bounds = Bounds::default();
    let loss = |theta: &Hyperparams| scenario.cost(theta, cfg.metric, encoder);
    let evaluations: Vec<Observation> = match (plan.optimizer, plan.init) {
        (Optimizer::Gd, Some(init)) => {
            let opts = GdOptions { learning_rate: cfg.gd_learning_rate, steps: cfg.gd_steps, ..GdOptions::default() };
            gd_optimize(&loss, &init, &opts, &bounds)?.history
        }
        (Optimizer::Gd, None) => return Err(anyhow!("gradient descent needs an initial point")),
        (Optimizer::Bo, init) => {
            let opts = BoOptions { budget: cfg.budget, seed: plan.seed, ..BoOptions::default() };
            let initial: Vec<Hyperparams> = init.into_iter().collect();
            bo_optimize_from(&loss, &bounds, &opts, &initial)?.observations.observations
        }
    };
    std::fs::write(dir.join("trace.csv"), trace_csv(&evaluations))?;

    let incumbent_at = |n: usize| -> &Observation {
        evaluations[..n].iter().reduce(|best, o| if o.cost < best.cost { o } else { best }).unwrap()
    };
    let first = &evaluations[0];
    let middle = incumbent_at(evaluations.len().div_ceil(2));
    let last = incumbent_at(evaluations.len());
    let stages: Vec<(&str, &Observation, &str)> =
        vec![("initial", first, PALETTE[4]), ("intermediate", middle, PALETTE[2]), ("final", last, PALETTE[1])];
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut series = vec![Series::from_trajectory("demonstration", PALETTE[0], &scenario.anchor).dashed()];
    for (name, obs, color) in &stages {
        let traj = scenario.adapt(&obs.theta)?;
        write_trajectory_csv(&traj, dir.join(format!("{name}.csv")))?;
        series.push(Series::from_trajectory(&format!("{name}: cost {:.4}", obs.cost), color, &traj));
        trajectories.push(traj);
    }
    emit_svg(&series, &markers(scenario), &dir.join("overlay.svg"))?;

    let final_traj = &trajectories[2];
    let report = RunReport {
        method: scenario.method,
        optimizer: plan.optimizer,
        metric: cfg.metric,
        letter: scenario.letter,
        seed: plan.seed,
        initial_theta: first.theta,
        final_theta: last.theta,
        initial_cost: first.cost,
        final_cost: last.cost,
        incumbent: autolfd_core::hyperopt::ObservationSet { observations: evaluations.clone() }.incumbent_trace(),
        evaluations,
        initial_metrics: scenario.report(&trajectories[0], encoder)?,
        final_metrics: scenario.report(final_traj, encoder)?,
        constraint_errors: scenario.constraint_errors(final_traj),
    };
    report.validate()?;
    write_json(&report, &dir.join("report.json"))?;
    Ok(report)
}

/// Adapts the configured letter with the configured optimizer.
pub fn auto(cfg: &ExperimentConfig) -> anyhow::Result<RunReport> {
    prepare(cfg, &cfg.out)?;
    let clock = Instant::now();
    let encoder = load_encoder(cfg)?;
    let corpus = Corpus::from_config(cfg)?;
    let scenario = Scenario::from_config(&corpus, cfg)?;
    let plan = RunPlan { optimizer: cfg.optimizer, init: Some(cfg.init_theta()), seed: cfg.seed };
    let report = run_loop(cfg, &scenario, encoder.as_ref(), &plan, &cfg.out)?;
    write_timing(&cfg.out, clock.elapsed())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub seed: u64,
    pub run: String,
    pub initial_theta: Option<Hyperparams>,
    pub final_theta: Hyperparams,
    pub final_cost: f64,
    pub shape_distortion: f64,
}

/// Descent from the good and the adversarial preset, and BO without an
/// initial point, for every seed.
pub fn compare(cfg: &ExperimentConfig) -> anyhow::Result<Vec<CompareRow>> {
    prepare(cfg, &cfg.out)?;
    let clock = Instant::now();
    let encoder = load_encoder(cfg)?;
    let corpus = Corpus::from_config(cfg)?;
    let scenario = Scenario::from_config(&corpus, cfg)?;
    let good = cfg.init_theta.filter(|_| cfg.init == InitPreset::Good).unwrap_or(init_preset(cfg.method, InitPreset::Good));
    let bad = init_preset(cfg.method, InitPreset::Adversarial);
    let mut cells: Vec<(u64, &str, RunPlan)> = Vec::new();
    for seed in cfg.seed..cfg.seed + cfg.compare_seeds as u64 {
        cells.push((seed, "gd-good", RunPlan { optimizer: Optimizer::Gd, init: Some(good), seed }));
        cells.push((seed, "gd-bad", RunPlan { optimizer: Optimizer::Gd, init: Some(bad), seed }));
        cells.push((seed, "bo", RunPlan { optimizer: Optimizer::Bo, init: None, seed }));
    }
    let results = par::map(&cells, |(seed, run, plan)| {
        let dir: PathBuf = cfg.out.join(format!("seed{seed}")).join(run);
        run_loop(cfg, &scenario, encoder.as_ref(), plan, &dir)
    });
    let mut rows = Vec::new();
    for ((seed, run, plan), result) in cells.iter().zip(results) {
        let report = result?;
        rows.push(CompareRow {
            seed: *seed,
            run: run.to_string(),
            initial_theta: plan.init,
            final_theta: report.final_theta,
            final_cost: report.final_cost,
            shape_distortion: report.final_metrics.shape_distortion,
        });
    }
    let mut csv = String::from("seed,run,final_cost,shape_distortion,log10_kh,log10_lambda\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.seed, r.run, r.final_cost, r.shape_distortion, r.final_theta.log10_kh, r.final_theta.log10_lambda
        )?;
    }
    std::fs::write(cfg.out.join("compare.csv"), csv)?;
    write_json(&rows, &cfg.out.join("compare.json"))?;
    write_timing(&cfg.out, clock.elapsed())?;
    Ok(rows)
}
