//! Synthetic handwriting corpus.
//!
//! Each letter is a single stroke through a list of template waypoints in the
//! unit box. The stroke is the C2 cubic spline through the waypoints written
//! in piecewise Bézier form, traversed with a minimum-jerk time law so that
//! every demonstration starts and ends at rest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trajectory::{uniform_grid, Demonstration, Trajectory};

/// Samples per synthetic demonstration.
pub const LETTER_POINTS: usize = 200;
/// Duration of every synthetic demonstration in seconds.
pub const LETTER_DURATION: f64 = 1.0;
/// Maximum per-coordinate displacement applied to each template waypoint.
pub const WAYPOINT_JITTER: f64 = 0.03;

const TEMPLATES: &[(char, &[[f64; 2]])] = &[
    ('A', &[[0.0, 0.0], [0.2, 0.5], [0.42, 1.0], [0.62, 0.55], [0.78, 0.12], [0.6, 0.38], [0.22, 0.42]]),
    (
        'G',
        &[
            [0.85, 0.85],
            [0.5, 1.0],
            [0.15, 0.75],
            [0.05, 0.4],
            [0.25, 0.05],
            [0.65, 0.05],
            [0.85, 0.3],
            [0.85, 0.45],
            [0.55, 0.45],
        ],
    ),
    ('J', &[[0.85, 1.0], [0.8, 0.6], [0.75, 0.2], [0.5, 0.0], [0.2, 0.1], [0.1, 0.3]]),
    ('L', &[[0.1, 1.0], [0.1, 0.5], [0.12, 0.05], [0.5, 0.02], [0.9, 0.0]]),
    ('N', &[[0.0, 0.0], [0.02, 0.5], [0.05, 1.0], [0.5, 0.5], [0.92, 0.0], [0.95, 0.5], [1.0, 1.0]]),
    ('S', &[[0.9, 0.85], [0.5, 1.0], [0.12, 0.78], [0.5, 0.5], [0.88, 0.22], [0.5, 0.0], [0.1, 0.15]]),
    ('Z', &[[0.05, 1.0], [0.5, 1.0], [0.95, 0.98], [0.5, 0.5], [0.05, 0.02], [0.5, 0.0], [0.95, 0.0]]),
];

/// Letters available to [`synth_letters`].
pub fn letter_catalog() -> Vec<char> {
    TEMPLATES.iter().map(|(c, _)| *c).collect()
}

/// Template waypoints of a letter.
pub fn template(letter: char) -> Result<&'static [[f64; 2]]> {
    TEMPLATES
        .iter()
        .find(|(c, _)| *c == letter.to_ascii_uppercase())
        .map(|(_, w)| *w)
        .ok_or_else(|| Error::UnknownLetter(letter.to_string()))
}

/// Generates `count` jittered demonstrations of `letter`, deterministic in `seed`.
pub fn synth_letters(letter: char, count: usize, seed: u64) -> Result<Vec<Demonstration>> {
    let letter = letter.to_ascii_uppercase();
    let waypoints = template(letter)?;
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(letter as u64);
    (0..count)
        .map(|k| {
            let jittered: Vec<[f64; 2]> = waypoints
                .iter()
                .map(|w| {
                    [
                        w[0] + rng.random_range(-WAYPOINT_JITTER..=WAYPOINT_JITTER),
                        w[1] + rng.random_range(-WAYPOINT_JITTER..=WAYPOINT_JITTER),
                    ]
                })
                .collect();
            let traj = stroke(&jittered, LETTER_POINTS, LETTER_DURATION)?;
            Demonstration::new(traj, format!("{letter}{k}"))
        })
        .collect()
}

/// Samples the spline stroke through `waypoints` with a minimum-jerk time law.
pub fn stroke(waypoints: &[[f64; 2]], n: usize, duration: f64) -> Result<Trajectory> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidArgument("a stroke needs at least two waypoints".into()));
    }
    let xs: Vec<f64> = waypoints.iter().map(|w| w[0]).collect();
    let ys: Vec<f64> = waypoints.iter().map(|w| w[1]).collect();
    let bx = bezier_segments(&xs);
    let by = bezier_segments(&ys);
    let segments = (waypoints.len() - 1) as f64;
    let times = uniform_grid(0.0, duration, n);
    let positions = times
        .iter()
        .flat_map(|&t| {
            let u = t / duration;
            let p = segments * (10.0 * u.powi(3) - 15.0 * u.powi(4) + 6.0 * u.powi(5));
            [eval_bezier(&bx, p), eval_bezier(&by, p)]
        })
        .collect();
    Trajectory::from_positions(times, positions, 2)
}

/// Natural cubic spline on unit-spaced knots, returned as Bézier control
/// points `[P0, P1, P2, P3]` per segment.
fn bezier_segments(y: &[f64]) -> Vec<[f64; 4]> {
    let k = y.len();
    // second derivatives at the knots (natural boundary: zero at both ends)
    let mut m = vec![0.0; k];
    if k > 2 {
        let inner = k - 2;
        let mut diag = vec![4.0; inner];
        let mut rhs: Vec<f64> = (1..k - 1).map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1])).collect();
        for i in 1..inner {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        m[inner] = rhs[inner - 1] / diag[inner - 1];
        for i in (0..inner - 1).rev() {
            m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
        }
    }
    (0..k - 1)
        .map(|i| {
            let d0 = (y[i + 1] - y[i]) - (2.0 * m[i] + m[i + 1]) / 6.0;
            let d1 = (y[i + 1] - y[i]) + (m[i] + 2.0 * m[i + 1]) / 6.0;
            [y[i], y[i] + d0 / 3.0, y[i + 1] - d1 / 3.0, y[i + 1]]
        })
        .collect()
}

fn eval_bezier(segments: &[[f64; 4]], p: f64) -> f64 {
    let last = segments.len() - 1;
    let i = (p.floor().max(0.0) as usize).min(last);
    let u = (p - i as f64).clamp(0.0, 1.0);
    let c = &segments[i];
    let v = 1.0 - u;
    v * v * v * c[0] + 3.0 * v * v * u * c[1] + 3.0 * v * u * u * c[2] + u * u * u * c[3]
}
