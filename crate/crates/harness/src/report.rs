use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context};
use autolfd_core::hyperopt::Observation;
use autolfd_core::metrics::MetricReport;
use autolfd_core::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::config::{Method, MetricKind, Optimizer};

/// Outcome of one optimization run. Wall-clock time is kept out of it so the
/// report is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub optimizer: Optimizer,
    pub metric: MetricKind,
    pub letter: char,
    pub seed: u64,
    pub initial_theta: Hyperparams,
    pub final_theta: Hyperparams,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Every evaluated point in query order (accepted iterates for descent).
    pub evaluations: Vec<Observation>,
    /// Running minimum of the cost.
    pub incumbent: Vec<f64>,
    pub initial_metrics: MetricReport,
    pub final_metrics: MetricReport,
    /// Distance to each desired point relative to the anchor diagonal.
    pub constraint_errors: Vec<f64>,
}

impl RunReport {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.evaluations.is_empty() || self.incumbent.len() != self.evaluations.len() {
            bail!("cost history is empty or inconsistent");
        }
        if self.optimizer == Optimizer::Bo && self.final_cost > self.initial_cost {
            bail!("final incumbent {} exceeds initial cost {}", self.final_cost, self.initial_cost);
        }
        Ok(())
    }

    pub fn cost_history(&self) -> Vec<f64> {
        self.evaluations.iter().map(|o| o.cost).collect()
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Wall-clock seconds, written to `timing.json` apart from reproducible outputs.
pub fn write_timing(dir: &Path, elapsed: Duration) -> anyhow::Result<()> {
    write_json(&serde_json::json!({ "seconds": elapsed.as_secs_f64() }), &dir.join("timing.json"))
}
