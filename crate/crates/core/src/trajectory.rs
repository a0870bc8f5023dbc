//! Trajectory representation, demonstration I/O and resampling.
//!
//! Positions and velocities are stored row-major: sample `n` of an
//! `O`-dimensional trajectory occupies `[n * O, (n + 1) * O)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Samples per trajectory fed to the encoder and used for metric evaluation.
pub const ENCODER_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    dim: usize,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, positions: Vec<f64>, velocities: Vec<f64>, dim: usize) -> Result<Self> {
        let n = times.len();
        if dim == 0 {
            return Err(Error::InvalidTrajectory("dimension must be at least 1".into()));
        }
        if n < 2 {
            return Err(Error::InvalidTrajectory(format!("need at least 2 samples, got {n}")));
        }
        if positions.len() != n * dim || velocities.len() != n * dim {
            return Err(Error::InvalidTrajectory(format!(
                "expected {} entries for {n} samples of dimension {dim}, got {} positions and {} velocities",
                n * dim,
                positions.len(),
                velocities.len()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTrajectory(format!("non-increasing times at sample {}", i + 1)));
        }
        if times.iter().chain(&positions).chain(&velocities).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite entry".into()));
        }
        Ok(Trajectory { times, positions, velocities, dim })
    }

    /// Builds a trajectory from positions only, differentiating numerically.
    pub fn from_positions(times: Vec<f64>, positions: Vec<f64>, dim: usize) -> Result<Self> {
        let (velocities, _) = finite_differences(&positions, &times, dim)?;
        Trajectory::new(times, positions, velocities, dim)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn position(&self, n: usize) -> &[f64] {
        &self.positions[n * self.dim..(n + 1) * self.dim]
    }

    pub fn velocity(&self, n: usize) -> &[f64] {
        &self.velocities[n * self.dim..(n + 1) * self.dim]
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn first_position(&self) -> &[f64] {
        self.position(0)
    }

    pub fn last_position(&self) -> &[f64] {
        self.position(self.len() - 1)
    }

    /// Stacked `[position; velocity]` point at sample `n`.
    pub fn stacked(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dim);
        out.extend_from_slice(self.position(n));
        out.extend_from_slice(self.velocity(n));
        out
    }

    /// Per-axis (min, max) of the positions.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for row in self.positions.chunks_exact(self.dim) {
            for (b, &x) in bbox.iter_mut().zip(row) {
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
            }
        }
        bbox
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounding_box().iter().map(|(lo, hi)| (hi - lo).powi(2)).sum::<f64>().sqrt()
    }

    /// Linear interpolation of position and velocity at time `t`, clamped to the time range.
    pub fn sample_at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (i, w) = self.locate(t);
        let d = self.dim;
        let lerp = |data: &[f64]| -> Vec<f64> {
            if w == 0.0 {
                return data[i * d..(i + 1) * d].to_vec();
            }
            (0..d)
                .map(|k| (1.0 - w) * data[i * d + k] + w * data[(i + 1) * d + k])
                .collect()
        };
        (lerp(&self.positions), lerp(&self.velocities))
    }

    /// Index `i` and weight `w` such that `t` lies at `(1 - w) t_i + w t_{i+1}`.
    /// Knots map to `w = 0` exactly, which keeps resampling idempotent.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, 0.0);
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        (i, w)
    }

    /// Applies `f` to every position row, recomputing velocities numerically.
    pub fn map_positions<F>(&self, mut f: F) -> Result<Trajectory>
    where
        F: FnMut(usize, &[f64]) -> Vec<f64>,
    {
        let mut positions = Vec::with_capacity(self.positions.len());
        for n in 0..self.len() {
            let row = f(n, self.position(n));
            debug_assert_eq!(row.len(), self.dim);
            positions.extend(row);
        }
        Trajectory::from_positions(self.times.clone(), positions, self.dim)
    }
}

/// A demonstration with accelerations derived from its velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub trajectory: Trajectory,
    pub accelerations: Vec<f64>,
    pub label: String,
}

impl Demonstration {
    pub fn new(trajectory: Trajectory, label: impl Into<String>) -> Result<Self> {
        let (accelerations, _) =
            finite_differences(trajectory.velocities(), trajectory.times(), trajectory.dim())?;
        Ok(Demonstration { trajectory, accelerations, label: label.into() })
    }

    pub fn acceleration(&self, n: usize) -> &[f64] {
        let d = self.trajectory.dim();
        &self.accelerations[n * d..(n + 1) * d]
    }

    /// Resamples the underlying trajectory and rederives accelerations.
    pub fn resampled(&self, n_out: usize) -> Result<Demonstration> {
        Demonstration::new(resample(&self.trajectory, n_out)?, self.label.clone())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConstraintPoint {
    pub time: f64,
    pub position: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
}

impl ConstraintPoint {
    pub fn at(time: f64, position: Vec<f64>) -> Self {
        ConstraintPoint { time, position, velocity: None }
    }
}

/// Desired points (start, via, end) sorted by time.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Constraints {
    points: Vec<ConstraintPoint>,
}

impl Constraints {
    pub fn new(mut points: Vec<ConstraintPoint>) -> Result<Self> {
        points.sort_by(|a, b| a.time.total_cmp(&b.time));
        for p in &points {
            if !p.time.is_finite() || p.position.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("non-finite constraint".into()));
            }
            if let Some(v) = &p.velocity {
                if v.len() != p.position.len() {
                    return Err(Error::InvalidArgument("constraint velocity dimension mismatch".into()));
                }
            }
        }
        if points.windows(2).any(|w| w[0].time == w[1].time) {
            return Err(Error::InvalidArgument("more than one constraint at the same time".into()));
        }
        if points.windows(2).any(|w| w[0].position.len() != w[1].position.len()) {
            return Err(Error::InvalidArgument("constraint dimensions differ".into()));
        }
        Ok(Constraints { points })
    }

    /// Start and end constraints at the trajectory's first and last time.
    pub fn endpoints(traj: &Trajectory, start: Vec<f64>, end: Vec<f64>) -> Result<Self> {
        Constraints::new(vec![
            ConstraintPoint::at(traj.start_time(), start),
            ConstraintPoint::at(traj.end_time(), end),
        ])
    }

    pub fn points(&self) -> &[ConstraintPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<&ConstraintPoint> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&ConstraintPoint> {
        self.points.last()
    }

    /// Checks that every constraint lies in `[t_start, t_end]` and matches `dim`.
    pub fn check_against(&self, t_start: f64, t_end: f64, dim: usize) -> Result<()> {
        let span = t_end - t_start;
        let slack = 1e-9 * span.abs().max(1.0);
        for p in &self.points {
            if p.time < t_start - slack || p.time > t_end + slack {
                return Err(Error::InvalidArgument(format!(
                    "constraint time {} outside [{t_start}, {t_end}]",
                    p.time
                )));
            }
            if p.position.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "constraint has dimension {}, trajectory {dim}",
                    p.position.len()
                )));
            }
        }
        Ok(())
    }
}

/// Numerical first and second derivatives of row-major `values` sampled at `times`.
///
/// Uses the three-point Lagrange stencil, which is the central difference at
/// interior points of a uniform grid and one-sided at the two boundaries.
pub fn finite_differences(values: &[f64], times: &[f64], dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = times.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("finite differences need at least 3 samples, got {n}")));
    }
    if dim == 0 || values.len() != n * dim {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {n} samples of dimension {dim}",
            values.len()
        )));
    }
    let mut first = vec![0.0; n * dim];
    let mut second = vec![0.0; n * dim];
    for i in 0..n {
        // stencil centre: interior points use (i-1, i, i+1)
        let c = i.clamp(1, n - 2);
        let (t0, t1, t2) = (times[c - 1], times[c], times[c + 1]);
        let t = times[i];
        let d01 = t0 - t1;
        let d02 = t0 - t2;
        let d12 = t1 - t2;
        // derivative of the Lagrange basis polynomials evaluated at t
        let l0 = ((t - t1) + (t - t2)) / (d01 * d02);
        let l1 = ((t - t0) + (t - t2)) / (-d01 * d12);
        let l2 = ((t - t0) + (t - t1)) / (d02 * d12);
        let s0 = 2.0 / (d01 * d02);
        let s1 = -2.0 / (d01 * d12);
        let s2 = 2.0 / (d02 * d12);
        for k in 0..dim {
            let f0 = values[(c - 1) * dim + k];
            let f1 = values[c * dim + k];
            let f2 = values[(c + 1) * dim + k];
            first[i * dim + k] = l0 * f0 + l1 * f1 + l2 * f2;
            second[i * dim + k] = s0 * f0 + s1 * f1 + s2 * f2;
        }
    }
    Ok((first, second))
}

/// Uniform grid of `n` times spanning `[t0, t1]`; the last point is exactly `t1`.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t0];
    }
    let step = (t1 - t0) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|k| t0 + step * k as f64).collect();
    grid[n - 1] = t1;
    grid
}

/// Linear interpolation onto a uniform grid of `n_out` samples over the same time span.
pub fn resample(traj: &Trajectory, n_out: usize) -> Result<Trajectory> {
    if n_out < 2 {
        return Err(Error::InvalidArgument(format!("resample needs at least 2 samples, got {n_out}")));
    }
    let grid = uniform_grid(traj.start_time(), traj.end_time(), n_out);
    let dim = traj.dim();
    let mut positions = Vec::with_capacity(n_out * dim);
    let mut velocities = Vec::with_capacity(n_out * dim);
    for &t in &grid {
        let (p, v) = traj.sample_at(t);
        positions.extend(p);
        velocities.extend(v);
    }
    Trajectory::new(grid, positions, velocities, dim)
}

/// Resamples only when the sample count differs.
pub fn ensure_len(traj: &Trajectory, n: usize) -> Result<Trajectory> {
    if traj.len() == n {
        Ok(traj.clone())
    } else {
        resample(traj, n)
    }
}

/// Stacks `[x_1; v_1; ...; x_N; v_N]` into one vector of length `2 O N`.
pub fn flatten(traj: &Trajectory, expected_len: usize) -> Result<Vec<f64>> {
    if traj.len() != expected_len {
        return Err(Error::ShapeMismatch(format!(
            "expected {expected_len} samples, got {}",
            traj.len()
        )));
    }
    let mut out = Vec::with_capacity(2 * traj.dim() * traj.len());
    for n in 0..traj.len() {
        out.extend_from_slice(traj.position(n));
        out.extend_from_slice(traj.velocity(n));
    }
    Ok(out)
}

/// Inverse of [`flatten`] for the given times and dimension.
pub fn unflatten(flat: &[f64], times: Vec<f64>, dim: usize) -> Result<Trajectory> {
    let n = times.len();
    if flat.len() != 2 * dim * n {
        return Err(Error::ShapeMismatch(format!(
            "flat vector of length {} does not match {n} samples of dimension {dim}",
            flat.len()
        )));
    }
    let mut positions = Vec::with_capacity(n * dim);
    let mut velocities = Vec::with_capacity(n * dim);
    for row in flat.chunks_exact(2 * dim) {
        positions.extend_from_slice(&row[..dim]);
        velocities.extend_from_slice(&row[dim..]);
    }
    Trajectory::new(times, positions, velocities, dim)
}

/// Loads demonstrations from a CSV file or from every `.csv` file in a directory.
///
/// Blank lines inside a file separate independent segments, each becoming
/// its own demonstration.
pub fn load_demonstrations(path: impl AsRef<Path>) -> Result<Vec<Demonstration>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
            .collect();
        files.sort();
        let mut demos = Vec::new();
        for file in files {
            demos.extend(load_demonstrations(&file)?);
        }
        return Ok(demos);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_demonstrations(&text, &stem)
}

/// Parses CSV text with header `t,x1,...,xO[,v1,...,vO]`.
pub fn parse_demonstrations(text: &str, label: &str) -> Result<Vec<Demonstration>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (header_line, header) = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let (dim, has_vel) = parse_header(&columns).map_err(|message| Error::Parse { line: header_line, message })?;
    let width = columns.len();

    let mut segments: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new()];
    for (line_no, line) in lines {
        if line.is_empty() {
            if !segments.last().unwrap().is_empty() {
                segments.push(Vec::new());
            }
            continue;
        }
        if line == header {
            if !segments.last().unwrap().is_empty() {
                segments.push(Vec::new());
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {width} columns, found {}", fields.len()),
            });
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line: line_no, message: format!("invalid number '{f}'") })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some((_, prev)) = segments.last().unwrap().last() {
            if row[0] <= prev[0] {
                return Err(Error::Parse { line: line_no, message: "non-increasing times".into() });
            }
        }
        segments.last_mut().unwrap().push((line_no, row));
    }
    segments.retain(|s| !s.is_empty());
    if segments.is_empty() {
        return Err(Error::Parse { line: header_line, message: "no data rows".into() });
    }

    let multi = segments.len() > 1;
    segments
        .into_iter()
        .enumerate()
        .map(|(k, rows)| {
            let first_line = rows[0].0;
            let times: Vec<f64> = rows.iter().map(|(_, r)| r[0]).collect();
            let positions: Vec<f64> = rows.iter().flat_map(|(_, r)| r[1..=dim].iter().copied()).collect();
            let traj = if has_vel {
                let velocities = rows.iter().flat_map(|(_, r)| r[dim + 1..].iter().copied()).collect();
                Trajectory::new(times, positions, velocities, dim)
            } else {
                Trajectory::from_positions(times, positions, dim)
            }
            .map_err(|e| Error::Parse { line: first_line, message: e.to_string() })?;
            let name = if multi { format!("{label}#{k}") } else { label.to_string() };
            Demonstration::new(traj, name).map_err(|e| Error::Parse { line: first_line, message: e.to_string() })
        })
        .collect()
}

fn parse_header(columns: &[&str]) -> std::result::Result<(usize, bool), String> {
    if columns.first() != Some(&"t") {
        return Err("header must start with 't'".into());
    }
    let xs = columns[1..].iter().take_while(|c| c.starts_with('x')).count();
    let vs = columns[1 + xs..].iter().take_while(|c| c.starts_with('v')).count();
    if xs == 0 || 1 + xs + vs != columns.len() {
        return Err(format!("unrecognized header '{}'", columns.join(",")));
    }
    for (k, c) in columns[1..=xs].iter().enumerate() {
        if *c != format!("x{}", k + 1) {
            return Err(format!("expected column x{}, found '{c}'", k + 1));
        }
    }
    for (k, c) in columns[1 + xs..].iter().enumerate() {
        if *c != format!("v{}", k + 1) {
            return Err(format!("expected column v{}, found '{c}'", k + 1));
        }
    }
    match vs {
        0 => Ok((xs, false)),
        v if v == xs => Ok((xs, true)),
        _ => Err(format!("{xs} position columns but {vs} velocity columns")),
    }
}

/// Serializes a trajectory as CSV with header `t,x1..xO,v1..vO`.
///
/// Values use Rust's shortest round-trip float formatting, so parsing the
/// output reproduces the trajectory bit for bit.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let d = traj.dim();
    let mut out = String::from("t");
    for k in 1..=d {
        write!(out, ",x{k}").unwrap();
    }
    for k in 1..=d {
        write!(out, ",v{k}").unwrap();
    }
    out.push('\n');
    for n in 0..traj.len() {
        write!(out, "{}", traj.times()[n]).unwrap();
        for x in traj.position(n).iter().chain(traj.velocity(n)) {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trajectory_to_csv(traj)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_traj(n: usize) -> Trajectory {
        let times = uniform_grid(0.0, 1.0, n);
        let positions = times.iter().flat_map(|&t| [1.0 + 2.0 * t, -0.5 + 3.0 * t]).collect();
        Trajectory::from_positions(times, positions, 2).unwrap()
    }

    #[test]
    fn parses_three_row_csv() {
        let demos = parse_demonstrations("t,x1,x2\n0,0,0\n0.5,1,2\n1,2,4\n", "abc").unwrap();
        assert_eq!(demos.len(), 1);
        let traj = &demos[0].trajectory;
        assert_eq!(traj.len(), 3);
        assert_eq!(traj.dim(), 2);
        assert_eq!(traj.velocity(1), &[2.0, 4.0]);
        assert_eq!(demos[0].label, "abc");
    }

    #[test]
    fn rejects_duplicate_time_with_line_number() {
        let err = parse_demonstrations("t,x1\n0,0\n0.5,1\n0.5,2\n", "d").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("non-increasing times"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_ragged_rows_and_bad_headers() {
        assert!(matches!(
            parse_demonstrations("t,x1,x2\n0,0,0\n1,1\n", "d"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(parse_demonstrations("time,x1\n0,0\n", "d").is_err());
        assert!(parse_demonstrations("t,x1,x2,v1\n0,0,0,0\n", "d").is_err());
        assert!(matches!(
            parse_demonstrations("t,x1\n0,0\n1,abc\n", "d"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn blank_lines_split_segments() {
        let demos = parse_demonstrations("t,x1\n0,0\n1,1\n2,2\n\n0,5\n1,6\n2,7\n", "s").unwrap();
        assert_eq!(demos.len(), 2);
        assert_eq!(demos[1].label, "s#1");
        assert_eq!(demos[1].trajectory.position(0), &[5.0]);
    }

    #[test]
    fn velocity_columns_are_used_verbatim() {
        let demos = parse_demonstrations("t,x1,v1\n0,0,9\n1,1,9\n2,2,9\n", "v").unwrap();
        assert_eq!(demos[0].trajectory.velocities(), &[9.0, 9.0, 9.0]);
        assert_eq!(demos[0].accelerations, vec![0.0; 3]);
    }

    #[test]
    fn finite_differences_of_simple_signals() {
        let times = uniform_grid(0.0, 2.0, 21);
        let constant = vec![3.0; 21];
        let (v, a) = finite_differences(&constant, &times, 1).unwrap();
        assert!(v.iter().chain(&a).all(|x| x.abs() < 1e-12));

        let linear: Vec<f64> = times.iter().map(|t| 2.0 * t).collect();
        let (v, _) = finite_differences(&linear, &times, 1).unwrap();
        assert!(v.iter().all(|x| (x - 2.0).abs() < 1e-12));

        let quad: Vec<f64> = times.iter().map(|t| t * t).collect();
        let (_, a) = finite_differences(&quad, &times, 1).unwrap();
        assert!(a[1..20].iter().all(|x| (x - 2.0).abs() < 1e-9));

        assert!(finite_differences(&[0.0, 1.0], &[0.0, 1.0], 1).is_err());
    }

    #[test]
    fn resample_identity_and_endpoints() {
        let traj = line_traj(11);
        let same = resample(&traj, 11).unwrap();
        assert_eq!(same, traj);
        let two = resample(&traj, 2).unwrap();
        assert_eq!(two.position(0), traj.position(0));
        assert_eq!(two.position(1), traj.position(10));
        assert!(resample(&traj, 1).is_err());
    }

    #[test]
    fn flatten_layout() {
        let traj = Trajectory::new(vec![0.0, 1.0], vec![1.0, 2.0], vec![0.0, 0.0], 1).unwrap();
        assert_eq!(flatten(&traj, 2).unwrap(), vec![1.0, 0.0, 2.0, 0.0]);
        assert!(flatten(&traj, 3).is_err());
        let zero = Trajectory::new(uniform_grid(0.0, 1.0, 4), vec![0.0; 8], vec![0.0; 8], 2).unwrap();
        assert_eq!(flatten(&zero, 4).unwrap(), vec![0.0; 16]);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let traj = line_traj(7).map_positions(|n, p| vec![p[0].sin() + n as f64 / 3.0, p[1].exp()]).unwrap();
        let text = trajectory_to_csv(&traj);
        let back = parse_demonstrations(&text, "r").unwrap();
        assert_eq!(back[0].trajectory, traj);
    }

    #[test]
    fn constraints_reject_duplicates() {
        let p = ConstraintPoint::at(0.5, vec![0.0]);
        assert!(Constraints::new(vec![p.clone(), p]).is_err());
    }
}
