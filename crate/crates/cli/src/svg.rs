//! Dependency-free SVG plots.
//!
//! Output is a pure function of the input: coordinates are printed with fixed
//! precision and series keep their given order, so identical input gives
//! byte-identical files.
//!
//! Color scales:
//! - series colors cycle through the Okabe-Ito palette;
//! - categorical heatmaps use [`PHASE_COLORS`] indexed by category code;
//! - sequential heatmaps interpolate linearly through [`SEQUENTIAL_STOPS`]
//!   between the given minimum and maximum.

use std::fmt::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("nothing to plot")]
    Empty,
    #[error("series {series:?}: non-finite value at index {index}")]
    NonFinite { series: String, index: usize },
    #[error("series {series:?}: {message}")]
    Shape { series: String, message: String },
    #[error("log axis needs positive values; series {series:?} index {index}")]
    NonPositive { series: String, index: usize },
}

pub const PALETTE: [&str; 7] = ["#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00", "#56b4e9", "#000000"];

/// Boundary (code 0) and phases 1 to 4.
pub const PHASE_COLORS: [&str; 5] = ["#bdbdbd", "#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

pub const SEQUENTIAL_STOPS: [(u8, u8, u8); 5] = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)];

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 70.0;
const MR: f64 = 150.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-width of the shaded band (for example one standard deviation).
    pub band: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub enum HeatScale {
    /// Values are category codes indexing `colors`; `labels` name them in the legend.
    Categorical { colors: Vec<String>, labels: Vec<String> },
    Sequential { min: f64, max: f64 },
}

fn check_finite(series: &str, v: &[f64]) -> Result<(), PlotError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(PlotError::NonFinite {
            series: series.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            let v = if log { v.log10() } else { v };
            (a.min(v), b.max(v))
        });
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else if !log {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }
    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }
    fn ticks(&self) -> Vec<f64> {
        (0..5)
            .map(|k| {
                let t = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                if self.log {
                    10f64.powf(t)
                } else {
                    t
                }
            })
            .collect()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, fmt((ML + W - MR) / 2.0), escape(title));
}

fn frame(out: &mut String, spec: &PlotSpec, xa: &Axis, ya: &Axis) {
    let (x0, x1, y0, y1) = (ML, W - MR, H - MB, MT);
    let _ = writeln!(out, r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#, fmt(x0), fmt(y1), fmt(x1 - x0), fmt(y0 - y1));
    for t in xa.ticks() {
        let px = x0 + xa.frac(t) * (x1 - x0);
        let _ = writeln!(out, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#, fmt(px), fmt(y0), fmt(y0 + 5.0));
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, fmt(px), fmt(y0 + 18.0), tick_label(t));
    }
    for t in ya.ticks() {
        let py = y0 - ya.frac(t) * (y0 - y1);
        let _ = writeln!(out, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>"#, fmt(x0 - 5.0), fmt(py), fmt(x0));
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, fmt(x0 - 8.0), fmt(py + 4.0), tick_label(t));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, fmt((x0 + x1) / 2.0), fmt(H - 12.0), escape(&spec.x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        fmt((y0 + y1) / 2.0),
        escape(&spec.y_label)
    );
}

fn legend(out: &mut String, entries: &[(String, String)]) {
    for (k, (name, color)) in entries.iter().enumerate() {
        let y = MT + 10.0 + 20.0 * k as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/>"#, fmt(W - MR + 12.0), fmt(y - 10.0));
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, fmt(W - MR + 30.0), fmt(y), escape(name));
    }
}

fn map_point(xa: &Axis, ya: &Axis, x: f64, y: f64) -> (f64, f64) {
    (ML + xa.frac(x) * (W - MR - ML), (H - MB) - ya.frac(y) * (H - MB - MT))
}

/// Lines with optional ±band shading; one `<polyline>` per series.
pub fn line_with_band(spec: &PlotSpec, series: &[LineSeries]) -> Result<String, PlotError> {
    if series.is_empty() || series.iter().all(|s| s.x.is_empty()) {
        return Err(PlotError::Empty);
    }
    for s in series {
        if s.x.len() != s.y.len() || s.band.as_ref().is_some_and(|b| b.len() != s.x.len()) {
            return Err(PlotError::Shape {
                series: s.name.clone(),
                message: "x, y and band lengths differ".into(),
            });
        }
        check_finite(&s.name, &s.x)?;
        check_finite(&s.name, &s.y)?;
        if let Some(b) = &s.band {
            check_finite(&s.name, b)?;
        }
        if spec.log_x {
            if let Some(index) = s.x.iter().position(|&v| v <= 0.0) {
                return Err(PlotError::NonPositive {
                    series: s.name.clone(),
                    index,
                });
            }
        }
    }
    let xa = Axis::new(series.iter().flat_map(|s| s.x.iter().copied()), spec.log_x);
    let ya = Axis::new(
        series.iter().flat_map(|s| {
            let b = s.band.clone().unwrap_or_else(|| vec![0.0; s.y.len()]);
            s.y.iter().zip(b).flat_map(|(&y, b)| [y - b, y + b]).collect::<Vec<_>>()
        }),
        false,
    );
    let mut out = String::new();
    header(&mut out, &spec.title);
    frame(&mut out, spec, &xa, &ya);
    let mut entries = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(b) = &s.band {
            let upper: Vec<(f64, f64)> = s.x.iter().zip(&s.y).zip(b).map(|((&x, &y), &b)| map_point(&xa, &ya, x, y + b)).collect();
            let lower: Vec<(f64, f64)> = s.x.iter().zip(&s.y).zip(b).rev().map(|((&x, &y), &b)| map_point(&xa, &ya, x, y - b)).collect();
            let pts: Vec<String> = upper.iter().chain(&lower).map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect();
            let _ = writeln!(out, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "));
        }
        let pts: Vec<String> = s.x.iter().zip(&s.y).map(|(&x, &y)| {
            let (px, py) = map_point(&xa, &ya, x, y);
            format!("{},{}", fmt(px), fmt(py))
        }).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        entries.push((s.name.clone(), color.to_string()));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Points per series, plus an optional line `y = intercept + slope · x`.
pub fn scatter(spec: &PlotSpec, series: &[ScatterSeries], line: Option<(f64, f64)>) -> Result<String, PlotError> {
    if series.is_empty() || series.iter().all(|s| s.x.is_empty()) {
        return Err(PlotError::Empty);
    }
    for s in series {
        if s.x.len() != s.y.len() {
            return Err(PlotError::Shape {
                series: s.name.clone(),
                message: "x and y lengths differ".into(),
            });
        }
        check_finite(&s.name, &s.x)?;
        check_finite(&s.name, &s.y)?;
    }
    let xa = Axis::new(series.iter().flat_map(|s| s.x.iter().copied()), spec.log_x);
    let ya = Axis::new(series.iter().flat_map(|s| s.y.iter().copied()), false);
    let mut out = String::new();
    header(&mut out, &spec.title);
    frame(&mut out, spec, &xa, &ya);
    if let Some((a, b)) = line {
        if a.is_finite() && b.is_finite() && !spec.log_x {
            let (xl, xh) = (xa.lo, xa.hi);
            let (p0, p1) = (map_point(&xa, &ya, xl, a + b * xl), map_point(&xa, &ya, xh, a + b * xh));
            let _ = writeln!(
                out,
                r#"<line class="trend" x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
                fmt(p0.0),
                fmt(p0.1),
                fmt(p1.0),
                fmt(p1.1)
            );
        }
    }
    let mut entries = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for (&x, &y) in s.x.iter().zip(&s.y) {
            let (px, py) = map_point(&xa, &ya, x, y);
            let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="3.5" fill="{color}"/>"#, fmt(px), fmt(py));
        }
        entries.push((s.name.clone(), color.to_string()));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

fn sequential_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (SEQUENTIAL_STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(SEQUENTIAL_STOPS.len() - 2);
    let f = t - k as f64;
    let (a, b) = (SEQUENTIAL_STOPS[k], SEQUENTIAL_STOPS[k + 1]);
    let mix = |p: u8, q: u8| (f64::from(p) + f * (f64::from(q) - f64::from(p))).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Grid of `<rect class="cell">` elements; `values[row][col]`, row 0 drawn at the bottom.
pub fn heatmap(spec: &PlotSpec, row_labels: &[String], col_labels: &[String], values: &[Vec<f64>], scale: &HeatScale) -> Result<String, PlotError> {
    if values.is_empty() || values[0].is_empty() {
        return Err(PlotError::Empty);
    }
    let cols = values[0].len();
    for (r, row) in values.iter().enumerate() {
        if row.len() != cols {
            return Err(PlotError::Shape {
                series: format!("row {r}"),
                message: "ragged heatmap rows".into(),
            });
        }
        check_finite(&format!("row {r}"), row)?;
    }
    if row_labels.len() != values.len() || col_labels.len() != cols {
        return Err(PlotError::Shape {
            series: "labels".into(),
            message: "label counts do not match the grid".into(),
        });
    }
    let rows = values.len();
    let (x0, x1, y0, y1) = (ML, W - MR, H - MB, MT);
    let (cw, ch) = ((x1 - x0) / cols as f64, (y0 - y1) / rows as f64);
    let mut out = String::new();
    header(&mut out, &spec.title);
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let color = match scale {
                HeatScale::Categorical { colors, .. } => {
                    let idx = v.round();
                    if idx < 0.0 || idx as usize >= colors.len() {
                        return Err(PlotError::Shape {
                            series: format!("row {r}"),
                            message: format!("category {v} at column {c} has no color"),
                        });
                    }
                    colors[idx as usize].clone()
                }
                HeatScale::Sequential { min, max } => {
                    let span = if max > min { max - min } else { 1.0 };
                    sequential_color((v - min) / span)
                }
            };
            let _ = writeln!(
                out,
                r#"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
                fmt(x0 + c as f64 * cw),
                fmt(y0 - (r + 1) as f64 * ch),
                fmt(cw),
                fmt(ch)
            );
        }
    }
    let _ = writeln!(out, r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#, fmt(x0), fmt(y1), fmt(x1 - x0), fmt(y0 - y1));
    let every = |n: usize| n.div_ceil(5).max(1);
    for (c, l) in col_labels.iter().enumerate().step_by(every(cols)) {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, fmt(x0 + (c as f64 + 0.5) * cw), fmt(y0 + 18.0), escape(l));
    }
    for (r, l) in row_labels.iter().enumerate().step_by(every(rows)) {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, fmt(x0 - 6.0), fmt(y0 - (r as f64 + 0.5) * ch + 4.0), escape(l));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, fmt((x0 + x1) / 2.0), fmt(H - 12.0), escape(&spec.x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        fmt((y0 + y1) / 2.0),
        escape(&spec.y_label)
    );
    match scale {
        HeatScale::Categorical { colors, labels } => {
            let entries: Vec<(String, String)> = labels.iter().cloned().zip(colors.iter().cloned()).collect();
            legend(&mut out, &entries);
        }
        HeatScale::Sequential { min, max } => {
            let entries: Vec<(String, String)> = (0..5)
                .map(|k| {
                    let t = k as f64 / 4.0;
                    (tick_label(min + t * (max - min)), sequential_color(t))
                })
                .collect();
            legend(&mut out, &entries);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Categorical scale for phase labels (code 0 = boundary, 1 to 4 = phases).
pub fn phase_scale() -> HeatScale {
    HeatScale::Categorical {
        colors: PHASE_COLORS.iter().map(|s| s.to_string()).collect(),
        labels: ["boundary", "phase 1", "phase 2", "phase 3", "phase 4"].iter().map(|s| s.to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_endpoints() {
        assert_eq!(sequential_color(0.0), "#440154");
        assert_eq!(sequential_color(1.0), "#fde725");
    }

    #[test]
    fn negative_zero_prints_as_zero() {
        assert_eq!(fmt(-0.0001), "0.00");
    }
}
