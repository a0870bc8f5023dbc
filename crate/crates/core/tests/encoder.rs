use autolfd_core::encoder::{
    generate_triplets, smoothed, train_encoder, EncoderParams, SynthesisOptions, TrainConfig, Triplet, TripletData,
};
use autolfd_core::letters::synth_letters;
use autolfd_core::metrics::shape_distortion;
use autolfd_core::trajectory::uniform_grid;
use autolfd_core::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POINTS: usize = 40;

fn random_curve(rng: &mut ChaCha8Rng) -> Trajectory {
    let times = uniform_grid(0.0, 1.0, POINTS);
    let (a, b, w) = (rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0), rng.random_range(1.0..6.0));
    let positions = times.iter().flat_map(|&t| [a * t + 0.1 * (w * t).sin(), b * (w * t).cos()]).collect();
    Trajectory::from_positions(times, positions, 2).unwrap()
}

fn random_data(seed: u64, count: usize) -> (EncoderParams, TripletData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets: Vec<Triplet> = (0..count)
        .map(|_| Triplet { anchor: random_curve(&mut rng), positive: random_curve(&mut rng), negative: random_curve(&mut rng) })
        .collect();
    let raw = TripletData::flatten(&triplets, POINTS).unwrap();
    let mut params = EncoderParams::init(POINTS, 2, seed).unwrap();
    params.fit_normalization(&raw.anchors).unwrap();
    let data = raw.normalized(&params);
    (params, data)
}

#[test]
fn backprop_matches_finite_differences() {
    let (mut params, data) = random_data(3, 6);
    let idx: Vec<usize> = (0..data.len()).collect();
    // wide margin keeps every hinge active, away from its kink
    let margin = 50.0;
    let (_, grads) = data.loss_and_gradient(&params, &idx, margin);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for l in 0..params.layers.len() {
        let (rows, cols) = params.layers[l].weights.shape();
        for _ in 0..20 {
            // one index past the weights selects a bias entry
            let r = rng.random_range(0..rows);
            let c = rng.random_range(0..=cols);
            let analytic = if c == cols { grads.layers[l].bias[r] } else { grads.layers[l].weights[(r, c)] };
            let nudge = |p: &mut EncoderParams, delta: f64| {
                if c == cols {
                    p.layers[l].bias[r] += delta;
                } else {
                    p.layers[l].weights[(r, c)] += delta;
                }
            };
            nudge(&mut params, h);
            let up = data.loss(&params, &idx, margin);
            nudge(&mut params, -2.0 * h);
            let down = data.loss(&params, &idx, margin);
            nudge(&mut params, h);
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(rel <= 1e-4, "layer {l} ({r}, {c}): analytic {analytic} vs fd {fd}");
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn inactive_hinges_give_zero_gradient() {
    let (params, mut data) = random_data(4, 4);
    for i in 0..data.len() {
        data.positives[i] = data.anchors[data.anchor_index[i]].clone();
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let (loss, grads) = data.loss_and_gradient(&params, &idx, 1e-9);
    assert_eq!(loss, 0.0);
    assert!(grads.layers.iter().all(|g| g.weights.iter().chain(g.bias.iter()).all(|w| *w == 0.0)));
}

fn groups() -> Vec<Vec<autolfd_core::Demonstration>> {
    ['A', 'G', 'S'].iter().map(|&l| synth_letters(l, 4, 0).unwrap()).collect()
}

#[test]
fn triplets_respect_label_thresholds_and_are_deterministic() {
    let opts = SynthesisOptions::default();
    let triplets = generate_triplets(&groups(), 24, 5, &opts).unwrap();
    assert_eq!(triplets.len(), 24);
    for t in &triplets {
        assert!(shape_distortion(&t.anchor, &t.positive).unwrap() < opts.positive_max);
        assert!(shape_distortion(&t.anchor, &t.negative).unwrap() > opts.negative_min);
        assert_eq!(t.anchor.len(), t.negative.len());
    }
    assert_eq!(triplets, generate_triplets(&groups(), 24, 5, &opts).unwrap());
    assert_ne!(triplets, generate_triplets(&groups(), 24, 6, &opts).unwrap());
    // a prefix does not depend on how many triplets follow it
    assert_eq!(triplets[..10], generate_triplets(&groups(), 10, 5, &opts).unwrap()[..]);
}

#[test]
fn triplet_requests_are_validated() {
    assert!(generate_triplets(&groups(), 0, 0, &SynthesisOptions::default()).is_err());
    assert!(generate_triplets(&[], 3, 0, &SynthesisOptions::default()).is_err());
    let impossible = SynthesisOptions { negative_min: 1e9, max_attempts: 3, ..Default::default() };
    assert!(generate_triplets(&groups(), 2, 0, &impossible).is_err());
}

fn small_config() -> TrainConfig {
    TrainConfig { epochs: 12, batch_size: 20, ..TrainConfig::desk() }
}

#[test]
fn training_reduces_the_smoothed_loss_and_is_reproducible() {
    let triplets = generate_triplets(&groups(), 120, 1, &SynthesisOptions::default()).unwrap();
    let a = train_encoder(&triplets, &small_config()).unwrap();
    let losses = smoothed(&a.log.losses(), 3);
    assert!(*losses.last().unwrap() <= 0.5 * losses[0], "{losses:?}");
    assert!(a.log.holdout_accuracy >= 0.9, "holdout accuracy {}", a.log.holdout_accuracy);
    assert_eq!(a.log.curve.len(), 12);
    assert_eq!(a.log.train_size + a.log.holdout_size, 120);
    let b = train_encoder(&triplets, &small_config()).unwrap();
    assert_eq!(a.params.to_json().unwrap(), b.params.to_json().unwrap());
    assert_eq!(a.log, b.log);
}

#[test]
fn smoothing_is_a_trailing_mean() {
    assert_eq!(smoothed(&[4.0, 2.0, 0.0, 6.0], 2), vec![4.0, 3.0, 1.0, 3.0]);
    assert_eq!(smoothed(&[1.0, 2.0], 100), vec![1.0, 1.5]);
}
