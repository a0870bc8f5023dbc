use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{triplet_loss_grad, EncoderParams, Gradients, Triplet};
use crate::error::{Error, Result};
use crate::par;
use crate::trajectory::{flatten, ensure_len, ENCODER_POINTS};

/// Triplets per gradient chunk; chunk gradients are summed in a fixed order.
const CHUNK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub margin: f64,
    pub seed: u64,
    pub holdout_fraction: f64,
}

impl TrainConfig {
    /// Long schedule with a small step.
    pub fn full() -> Self {
        TrainConfig { learning_rate: 1e-7, batch_size: 200, epochs: 30_000, margin: 0.5, seed: 0, holdout_fraction: 0.2 }
    }

    /// Short schedule with a larger step for CI-scale runs.
    pub fn desk() -> Self {
        TrainConfig { learning_rate: 1e-3, epochs: 500, ..Self::full() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 || !(self.margin > 0.0) {
            return Err(Error::InvalidArgument(format!("training config must be positive: {self:?}")));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidArgument("holdout fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::full()
    }
}

/// Flattened, normalized triplets with identical anchors stored once.
#[derive(Debug, Clone)]
pub struct TripletData {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
    pub anchor_index: Vec<usize>,
}

impl TripletData {
    /// Raw flattened vectors; call [`TripletData::normalized`] before training.
    pub fn flatten(triplets: &[Triplet], points: usize) -> Result<Self> {
        let mut anchors = Vec::new();
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut anchor_index = Vec::with_capacity(triplets.len());
        let mut positives = Vec::with_capacity(triplets.len());
        let mut negatives = Vec::with_capacity(triplets.len());
        let flat = |t: &crate::trajectory::Trajectory| flatten(&ensure_len(t, points)?, points);
        for t in triplets {
            let dim = t.anchor.dim();
            if t.positive.dim() != dim || t.negative.dim() != dim {
                return Err(Error::ShapeMismatch("triplet members differ in dimension".into()));
            }
            let a = flat(&t.anchor)?;
            let key: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let id = *seen.entry(key).or_insert_with(|| {
                anchors.push(a);
                anchors.len() - 1
            });
            anchor_index.push(id);
            positives.push(flat(&t.positive)?);
            negatives.push(flat(&t.negative)?);
        }
        Ok(TripletData { anchors, positives, negatives, anchor_index })
    }

    pub fn normalized(&self, params: &EncoderParams) -> Self {
        let norm = |v: &Vec<Vec<f64>>| v.iter().map(|x| params.normalize(x)).collect();
        TripletData {
            anchors: norm(&self.anchors),
            positives: norm(&self.positives),
            negatives: norm(&self.negatives),
            anchor_index: self.anchor_index.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.anchor_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor_index.is_empty()
    }

    /// Summed loss and its gradient over the triplets `idx`.
    pub fn loss_and_gradient(&self, params: &EncoderParams, idx: &[usize], margin: f64) -> (f64, Gradients) {
        let (loss, fwd, d_out) = self.chunk_pass(params, idx, margin);
        if loss == 0.0 {
            // every hinge is inactive
            return (loss, Gradients::zeros_like(params));
        }
        (loss, params.backward(&fwd, d_out))
    }

    /// Summed loss over the triplets `idx`.
    pub fn loss(&self, params: &EncoderParams, idx: &[usize], margin: f64) -> f64 {
        self.chunk_pass(params, idx, margin).0
    }

    fn chunk_pass(&self, params: &EncoderParams, idx: &[usize], margin: f64) -> (f64, super::Forward, DMatrix<f64>) {
        let mut cols: Vec<usize> = Vec::new();
        let mut slot = HashMap::new();
        let anchor_col: Vec<usize> = idx
            .iter()
            .map(|&i| {
                let a = self.anchor_index[i];
                *slot.entry(a).or_insert_with(|| {
                    cols.push(a);
                    cols.len() - 1
                })
            })
            .collect();
        let u = cols.len();
        let b = idx.len();
        let d = params.input_size();
        let data: Vec<f64> = cols
            .iter()
            .map(|&a| &self.anchors[a])
            .chain(idx.iter().map(|&i| &self.positives[i]))
            .chain(idx.iter().map(|&i| &self.negatives[i]))
            .flat_map(|v| v.iter().copied())
            .collect();
        let x = DMatrix::from_vec(d, u + 2 * b, data);
        let fwd = params.forward(&x);
        let out = fwd.output();
        let h = out.nrows();
        let a_emb = DMatrix::from_fn(h, b, |r, j| out[(r, anchor_col[j])]);
        let p_emb = out.columns(u, b).into_owned();
        let n_emb = out.columns(u + b, b).into_owned();
        let (loss, ga, gp, gn) = triplet_loss_grad(&a_emb, &p_emb, &n_emb, margin);
        let mut d_out = DMatrix::zeros(h, u + 2 * b);
        for j in 0..b {
            let mut col = d_out.column_mut(anchor_col[j]);
            col += ga.column(j);
        }
        d_out.columns_mut(u, b).copy_from(&gp);
        d_out.columns_mut(u + b, b).copy_from(&gn);
        (loss, fwd, d_out)
    }

    /// Embedding distances `(|a - p|, |a - n|)` for each triplet in `idx`.
    pub fn distances(&self, params: &EncoderParams, idx: &[usize]) -> Vec<(f64, f64)> {
        let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();
        par::map(&chunks, |c| self.chunk_distances(params, c)).into_iter().flatten().collect()
    }

    fn chunk_distances(&self, params: &EncoderParams, idx: &[usize]) -> Vec<(f64, f64)> {
        let d = params.input_size();
        let b = idx.len();
        let data: Vec<f64> = idx
            .iter()
            .map(|&i| &self.anchors[self.anchor_index[i]])
            .chain(idx.iter().map(|&i| &self.positives[i]))
            .chain(idx.iter().map(|&i| &self.negatives[i]))
            .flat_map(|v| v.iter().copied())
            .collect();
        let out = params.forward(&DMatrix::from_vec(d, 3 * b, data)).activations.pop().unwrap();
        (0..b)
            .map(|j| ((out.column(j) - out.column(b + j)).norm(), (out.column(j) - out.column(2 * b + j)).norm()))
            .collect()
    }
}

/// Fraction of triplets whose positive embeds strictly closer to the anchor than the negative.
pub fn evaluate_accuracy(params: &EncoderParams, data: &TripletData, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();
    let hits: usize = par::map(&chunks, |c| data.chunk_distances(params, c).iter().filter(|(p, n)| p < n).count())
        .into_iter()
        .sum();
    hits as f64 / idx.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    /// Mean per-triplet training loss over the epoch.
    pub loss: f64,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub curve: Vec<CurvePoint>,
    pub train_size: usize,
    pub holdout_size: usize,
    pub initial_holdout_accuracy: f64,
    pub holdout_accuracy: f64,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,holdout_accuracy\n");
        for p in &self.curve {
            writeln!(out, "{},{},{}", p.epoch, p.loss, p.holdout_accuracy).unwrap();
        }
        out
    }

    pub fn losses(&self) -> Vec<f64> {
        self.curve.iter().map(|p| p.loss).collect()
    }
}

/// Trailing moving average with the given window.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let w = &values[(i + 1).saturating_sub(window)..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainedEncoder {
    pub params: EncoderParams,
    pub log: TrainLog,
}

fn sgd_step(params: &mut EncoderParams, grads: &Gradients, lr: f64) {
    for (l, g) in params.layers.iter_mut().zip(&grads.layers) {
        l.weights.zip_apply(&g.weights, |w, d| *w -= lr * d);
        l.bias.zip_apply(&g.bias, |w, d| *w -= lr * d);
    }
}

/// Mini-batch SGD on the summed triplet loss with a seeded train/holdout split.
pub fn train_encoder(triplets: &[Triplet], config: &TrainConfig) -> Result<TrainedEncoder> {
    config.validate()?;
    if triplets.len() < 2 {
        return Err(Error::InvalidArgument("training needs at least two triplets".into()));
    }
    let dim = triplets[0].anchor.dim();
    let raw = TripletData::flatten(triplets, ENCODER_POINTS)?;

    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    split_rng.set_stream(0);
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.shuffle(&mut split_rng);
    let holdout_size = ((triplets.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, triplets.len() - 1);
    let (holdout, train) = order.split_at(holdout_size);
    let (mut holdout, mut train) = (holdout.to_vec(), train.to_vec());
    holdout.sort_unstable();
    train.sort_unstable();

    let mut params = EncoderParams::init(ENCODER_POINTS, dim, config.seed)?;
    let mut train_anchors: Vec<usize> = train.iter().map(|&i| raw.anchor_index[i]).collect();
    train_anchors.sort_unstable();
    train_anchors.dedup();
    let anchor_vectors: Vec<Vec<f64>> = train_anchors.iter().map(|&a| raw.anchors[a].clone()).collect();
    params.fit_normalization(&anchor_vectors)?;
    let data = raw.normalized(&params);

    let initial_holdout_accuracy = evaluate_accuracy(&params, &data, &holdout);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(2);
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut perm = train.clone();
        perm.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in perm.chunks(config.batch_size).enumerate() {
            let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
            let parts = par::map(&chunks, |c| data.loss_and_gradient(&params, c, config.margin));
            let mut grads = Gradients::zeros_like(&params);
            let mut loss = 0.0;
            for (l, g) in &parts {
                loss += l;
                grads.add_assign(g);
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("epoch {epoch}, batch {b}: loss {loss}")));
            }
            epoch_loss += loss;
            sgd_step(&mut params, &grads, config.learning_rate);
        }
        let holdout_accuracy = evaluate_accuracy(&params, &data, &holdout);
        curve.push(CurvePoint { epoch, loss: epoch_loss / train.len() as f64, holdout_accuracy });
    }
    let holdout_accuracy = curve.last().map_or(initial_holdout_accuracy, |p| p.holdout_accuracy);
    Ok(TrainedEncoder {
        params,
        log: TrainLog { curve, train_size: train.len(), holdout_size, initial_holdout_accuracy, holdout_accuracy },
    })
}
