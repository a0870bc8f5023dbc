//! Deterministic overlay plots of planar trajectories.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use autolfd_core::Trajectory;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 24.0;
const LEGEND_ROW: f64 = 16.0;

/// One polyline with its legend entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<[f64; 2]>,
}

impl Series {
    /// First two position coordinates of `traj`.
    pub fn from_trajectory(label: &str, color: &str, traj: &Trajectory) -> Self {
        let points = (0..traj.len())
            .map(|n| {
                let p = traj.position(n);
                [p[0], p.get(1).copied().unwrap_or(0.0)]
            })
            .collect();
        Series { label: label.to_string(), color: color.to_string(), dashed: false, points }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

/// Uniform-scale map from data coordinates to the canvas (y pointing up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x0: f64,
    pub y0: f64,
    pub scale: f64,
}

impl Frame {
    pub fn fit(series: &[Series], markers: &[[f64; 2]]) -> Self {
        let pts = series.iter().flat_map(|s| s.points.iter()).chain(markers);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in pts {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let span = if span > 0.0 { span } else { 1.0 };
        Frame { x0: lo[0], y0: lo[1], scale: (SIZE - 2.0 * MARGIN) / span }
    }

    pub fn to_canvas(&self, p: [f64; 2]) -> [f64; 2] {
        [MARGIN + (p[0] - self.x0) * self.scale, SIZE - MARGIN - (p[1] - self.y0) * self.scale]
    }

    pub fn to_data(&self, c: [f64; 2]) -> [f64; 2] {
        [self.x0 + (c[0] - MARGIN) / self.scale, self.y0 + (SIZE - MARGIN - c[1]) / self.scale]
    }
}

/// Renders polylines, circles at `markers` and a legend.
pub fn render_svg(series: &[Series], markers: &[[f64; 2]]) -> anyhow::Result<String> {
    if series.is_empty() {
        bail!("at least one trajectory is required");
    }
    let frame = Frame::fit(series, markers);
    let height = SIZE + LEGEND_ROW * series.len() as f64 + 8.0;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{height}" viewBox="0 0 {SIZE} {height}">"#
    )?;
    writeln!(out, r#"<rect width="{SIZE}" height="{height}" fill="white"/>"#)?;
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&p| {
                let c = frame.to_canvas(p);
                format!("{:.3},{:.3}", c[0], c[1])
            })
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="2"{dash} points="{}"/>"#,
            s.color,
            pts.join(" ")
        )?;
    }
    for &m in markers {
        let c = frame.to_canvas(m);
        writeln!(
            out,
            r#"<circle cx="{:.6}" cy="{:.6}" r="5" fill="none" stroke="black" stroke-width="1.5"/>"#,
            c[0], c[1]
        )?;
    }
    for (i, s) in series.iter().enumerate() {
        let y = SIZE + LEGEND_ROW * (i as f64 + 0.5);
        writeln!(
            out,
            r#"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#,
            MARGIN + 20.0,
            s.color
        )?;
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            MARGIN + 26.0,
            y + 4.0,
            escape(&s.label)
        )?;
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_svg(series: &[Series], markers: &[[f64; 2]], path: &Path) -> anyhow::Result<()> {
    let text = render_svg(series, markers)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const PALETTE: [&str; 5] = ["#333333", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
