//! Siamese trajectory encoder: a fully connected tanh network mapping a
//! flattened `[x_n; v_n]` trajectory to an embedding, trained with a triplet
//! hinge loss.

mod train;
mod triplets;

pub use train::{
    evaluate_accuracy, smoothed, train_encoder, CurvePoint, TrainConfig, TrainLog, TrainedEncoder, TripletData,
};
pub use triplets::{generate_triplets, SynthesisOptions, Triplet};

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};
use crate::trajectory::{ensure_len, flatten, Trajectory};

pub const HIDDEN_SIZES: [usize; 2] = [256, 128];
pub const EMBEDDING_DIM: usize = 32;
/// Per-coordinate scales are floored at this fraction of their channel's mean scale.
pub const SCALE_FLOOR_RATIO: f64 = 0.1;

/// One affine layer `y = W x + b`; `W` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { weights: DMatrix::zeros(outputs, inputs), bias: DVector::zeros(outputs) }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = DMatrix::from_fn(outputs, inputs, |_, _| rng.random_range(-limit..limit));
        Layer { weights, bias: DVector::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Weights and input normalization of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Layer>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Samples per trajectory.
    pub points: usize,
    /// Workspace dimension `O`.
    pub dim: usize,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRecord {
    points: usize,
    dim: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    layers: Vec<LayerRecord>,
}

impl EncoderParams {
    /// Xavier-initialized network with identity normalization.
    pub fn init(points: usize, dim: usize, seed: u64) -> Result<Self> {
        let input = 2 * dim * points;
        if input == 0 {
            return Err(Error::InvalidArgument("encoder input size must be positive".into()));
        }
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let sizes = layer_sizes(input);
        let layers = sizes.windows(2).map(|w| Layer::xavier(w[0], w[1], &mut rng)).collect();
        Ok(EncoderParams { layers, mean: vec![0.0; input], scale: vec![1.0; input], points, dim })
    }

    /// Same architecture with every weight and bias zero.
    pub fn zeros(points: usize, dim: usize) -> Self {
        let input = 2 * dim * points;
        let sizes = layer_sizes(input);
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        EncoderParams { layers, mean: vec![0.0; input], scale: vec![1.0; input], points, dim }
    }

    pub fn input_size(&self) -> usize {
        2 * self.dim * self.points
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Sets per-coordinate mean and standard deviation from flattened anchors.
    pub fn fit_normalization(&mut self, anchors: &[Vec<f64>]) -> Result<()> {
        let d = self.input_size();
        if anchors.is_empty() || anchors.iter().any(|a| a.len() != d) {
            return Err(Error::ShapeMismatch(format!("normalization needs nonempty anchors of length {d}")));
        }
        let n = anchors.len() as f64;
        let mut mean = vec![0.0; d];
        for a in anchors {
            for (m, x) in mean.iter_mut().zip(a) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; d];
        for a in anchors {
            for ((s, x), m) in std.iter_mut().zip(a).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        let channels = 2 * self.dim;
        for c in 0..channels {
            let idx: Vec<usize> = (c..d).step_by(channels).collect();
            let channel_mean = idx.iter().map(|&i| std[i]).sum::<f64>() / idx.len() as f64;
            let floor = if channel_mean > 0.0 { SCALE_FLOOR_RATIO * channel_mean } else { 1.0 };
            for i in idx {
                std[i] = std[i].max(floor);
            }
        }
        self.mean = mean;
        self.scale = std;
        Ok(())
    }

    /// Flattened, normalized encoder input for `traj` (resampled to `points` if needed).
    pub fn input_vector(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        if traj.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects dimension {}, got {}",
                self.dim,
                traj.dim()
            )));
        }
        let flat = flatten(&ensure_len(traj, self.points)?, self.points)?;
        Ok(self.normalize(&flat))
    }

    pub fn normalize(&self, flat: &[f64]) -> Vec<f64> {
        flat.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }

    /// Embedding of one trajectory.
    pub fn encode(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let x = self.input_vector(traj)?;
        let out = self.forward(&DMatrix::from_column_slice(x.len(), 1, &x));
        Ok(out.activations.last().unwrap().column(0).iter().copied().collect())
    }

    /// Forward pass on normalized inputs stored as columns.
    pub fn forward(&self, inputs: &DMatrix<f64>) -> Forward {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.clone());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * activations.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            activations.push(z);
        }
        Forward { activations }
    }

    /// Gradients of a loss given its derivative with respect to the outputs.
    pub fn backward(&self, fwd: &Forward, d_out: DMatrix<f64>) -> Gradients {
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &fwd.activations[i];
            let weights = &delta * input.transpose();
            let bias = delta.column_sum();
            if i > 0 {
                let mut next = layer.weights.transpose() * &delta;
                next.zip_apply(input, |d, h| *d *= 1.0 - h * h);
                delta = next;
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    pub fn to_json(&self) -> Result<String> {
        let record = ParamsRecord {
            points: self.points,
            dim: self.dim,
            mean: self.mean.clone(),
            scale: self.scale.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord { weights: to_rows(&l.weights), bias: l.bias.iter().copied().collect() })
                .collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: ParamsRecord = serde_json::from_str(text)?;
        let layers = record
            .layers
            .iter()
            .map(|l| Ok(Layer { weights: from_rows(&l.weights)?, bias: DVector::from_vec(l.bias.clone()) }))
            .collect::<Result<Vec<_>>>()?;
        let params = EncoderParams { layers, mean: record.mean, scale: record.scale, points: record.points, dim: record.dim };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let d = self.input_size();
        if self.layers.is_empty() || self.mean.len() != d || self.scale.len() != d {
            return Err(Error::ShapeMismatch("encoder normalization does not match its input size".into()));
        }
        let mut width = d;
        for l in &self.layers {
            if l.inputs() != width || l.bias.len() != l.outputs() {
                return Err(Error::ShapeMismatch("encoder layer sizes are inconsistent".into()));
            }
            width = l.outputs();
        }
        let finite = self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()));
        if !finite || self.mean.iter().any(|v| !v.is_finite()) || self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("encoder parameters must be finite with positive scales".into()));
        }
        Ok(())
    }
}

/// `[input, 256, 128, 32]`
pub fn layer_sizes(input: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(HIDDEN_SIZES);
    sizes.push(EMBEDDING_DIM);
    sizes
}

/// Layer activations of a forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct Forward {
    pub activations: Vec<DMatrix<f64>>,
}

impl Forward {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().unwrap()
    }
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Gradients { layers: params.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect() }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Hinge `max(0, margin + |a - p| - |a - n|)`.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    (margin + euclidean(a, p) - euclidean(a, n)).max(0.0)
}

/// Summed triplet loss over columns of the three embedding matrices and its
/// gradient with respect to each of them.
pub fn triplet_loss_grad(
    a: &DMatrix<f64>,
    p: &DMatrix<f64>,
    n: &DMatrix<f64>,
    margin: f64,
) -> (f64, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (h, b) = a.shape();
    let mut ga = DMatrix::zeros(h, b);
    let mut gp = DMatrix::zeros(h, b);
    let mut gn = DMatrix::zeros(h, b);
    let mut total = 0.0;
    for j in 0..b {
        let dp = a.column(j) - p.column(j);
        let dn = a.column(j) - n.column(j);
        let (np, nn) = (dp.norm(), dn.norm());
        let loss = margin + np - nn;
        if loss <= 0.0 {
            continue;
        }
        total += loss;
        // subgradient 0 at a coincident pair
        let up = if np > 0.0 { dp / np } else { DVector::zeros(h) };
        let un = if nn > 0.0 { dn / nn } else { DVector::zeros(h) };
        ga.set_column(j, &(&up - &un));
        gp.set_column(j, &(-&up));
        gn.set_column(j, &un);
    }
    (total, ga, gp, gn)
}
