//! Deterministic SVG figures: observations, fitted trajectories and
//! vertical markers for claimed takeoff years.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{TimeSeries, Year};
use crate::detection::SegmentedFit;
use crate::fitting::HyperbolicFit;
use crate::model::HyperbolicParams;

/// Samples per overlay curve (per segment for segmented overlays).
pub const OVERLAY_SAMPLES: usize = 240;

/// Rough advance width of a 12 px serif character, for label placement.
const LABEL_CHAR_WIDTH: f64 = 6.5;

const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("non-positive value {value} at year {year} cannot be drawn on a log scale")]
    NonPositiveOnLogScale { year: Year, value: f64 },
    #[error("figure has neither observations nor overlays")]
    EmptySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YScale {
    /// GDP on a logarithmic axis.
    #[default]
    Log10,
    /// GDP on a linear axis.
    Linear,
    /// `1/GDP` on a linear axis; hyperbolas are straight lines.
    Reciprocal,
}

impl std::str::FromStr for YScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log10" | "log" => Ok(YScale::Log10),
            "linear" => Ok(YScale::Linear),
            "reciprocal" => Ok(YScale::Reciprocal),
            other => Err(format!("unknown scale {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Overlay {
    Hyperbolic(HyperbolicFit),
    Segmented(SegmentedFit),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub year: Year,
    pub label: String,
}

impl Marker {
    pub fn new(year: Year, label: impl Into<String>) -> Self {
        Self {
            year,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub title: String,
    pub series: Option<TimeSeries>,
    pub overlays: Vec<Overlay>,
    pub markers: Vec<Marker>,
    pub y_scale: YScale,
    pub width: u32,
    pub height: u32,
}

impl FigureSpec {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            series: None,
            overlays: Vec::new(),
            markers: Vec::new(),
            y_scale: YScale::Log10,
            width: 900,
            height: 600,
        }
    }

    pub fn with_series(mut self, series: TimeSeries) -> Self {
        self.series = Some(series);
        self
    }

    pub fn with_overlay(mut self, overlay: Overlay) -> Self {
        self.overlays.push(overlay);
        self
    }

    pub fn with_marker(mut self, marker: Marker) -> Self {
        self.markers.push(marker);
        self
    }

    pub fn with_scale(mut self, scale: YScale) -> Self {
        self.y_scale = scale;
        self
    }

    pub fn with_canvas(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    Linear,
    Log10,
}

/// Maps a data domain onto a pixel range. The range may be reversed (as for
/// SVG y coordinates, which grow downwards).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub kind: AxisKind,
    pub domain: (f64, f64),
    pub range: (f64, f64),
}

impl Axis {
    pub fn new(kind: AxisKind, domain: (f64, f64), range: (f64, f64)) -> Self {
        Self {
            kind,
            domain,
            range,
        }
    }

    fn transform(&self, v: f64) -> f64 {
        match self.kind {
            AxisKind::Linear => v,
            AxisKind::Log10 => v.log10(),
        }
    }

    pub fn map(&self, v: f64) -> f64 {
        let lo = self.transform(self.domain.0);
        let hi = self.transform(self.domain.1);
        let frac = (self.transform(v) - lo) / (hi - lo);
        self.range.0 + frac * (self.range.1 - self.range.0)
    }

    /// Tick positions and labels.
    pub fn ticks(&self) -> Vec<(f64, String)> {
        match self.kind {
            AxisKind::Log10 => {
                let lo = self.domain.0.log10().round() as i32;
                let hi = self.domain.1.log10().round() as i32;
                (lo..=hi)
                    .map(|e| (10f64.powi(e), decade_label(e)))
                    .collect()
            }
            AxisKind::Linear => {
                let step = nice_step(self.domain.1 - self.domain.0);
                let decimals = (-step.log10().floor()).max(0.0) as usize;
                let first = (self.domain.0 / step).ceil() as i64;
                let last = (self.domain.1 / step).floor() as i64;
                (first..=last)
                    .map(|i| {
                        let v = i as f64 * step;
                        (v, format!("{v:.decimals$}"))
                    })
                    .collect()
            }
        }
    }
}

fn decade_label(e: i32) -> String {
    match e {
        e if e >= 6 || e <= -5 => format!("1e{e}"),
        e if e >= 0 => format!("1{}", "0".repeat(e as usize)),
        e => format!("0.{}1", "0".repeat((-e - 1) as usize)),
    }
}

/// 1, 2 or 5 times a power of ten, giving roughly six intervals.
fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let unit = raw / mag;
    let nice = if unit <= 1.0 {
        1.0
    } else if unit <= 2.0 {
        2.0
    } else if unit <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn nice_linear_domain(min: f64, max: f64) -> (f64, f64) {
    let (min, max) = if max > min {
        (min, max)
    } else {
        let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.1 };
        (min - pad, max + pad)
    };
    let step = nice_step(max - min);
    ((min / step).floor() * step, (max / step).ceil() * step)
}

fn log_domain(min: f64, max: f64) -> (f64, f64) {
    let lo = min.log10().floor();
    let mut hi = max.log10().ceil();
    if hi <= lo {
        hi = lo + 1.0;
    }
    (10f64.powf(lo), 10f64.powf(hi))
}

/// Year beyond which a hyperbolic overlay is not drawn: one percent of
/// `|t_s|` short of the singularity.
pub fn overlay_clip_year(params: &HyperbolicParams) -> Option<Year> {
    params
        .singularity()
        .ok()
        .map(|ts| ts.year() - 0.01 * ts.year().abs())
}

fn value_on_scale(params: &HyperbolicParams, t: Year, scale: YScale) -> Option<f64> {
    match scale {
        YScale::Reciprocal => Some(params.reciprocal_at(t)),
        YScale::Log10 | YScale::Linear => params.predict(t).ok(),
    }
}

/// Polyline samples `(t, value)` of one hyperbolic curve over `[from, to]`,
/// stopping at the clip year.
fn sample_curve(params: &HyperbolicParams, from: Year, to: Year, scale: YScale) -> Vec<(f64, f64)> {
    let end = match overlay_clip_year(params) {
        Some(clip) => to.min(clip),
        None => to,
    };
    if end <= from {
        return Vec::new();
    }
    (0..OVERLAY_SAMPLES)
        .filter_map(|i| {
            let t = from + (end - from) * i as f64 / (OVERLAY_SAMPLES - 1) as f64;
            value_on_scale(params, t, scale).map(|v| (t, v))
        })
        .filter(|&(_, v)| v.is_finite() && (scale == YScale::Reciprocal || v > 0.0))
        .collect()
}

fn overlay_curves(overlay: &Overlay, x_domain: (f64, f64), scale: YScale) -> Vec<Vec<(f64, f64)>> {
    match overlay {
        Overlay::Hyperbolic(fit) => vec![sample_curve(&fit.params, x_domain.0, x_domain.1, scale)],
        Overlay::Segmented(seg) => seg
            .segments
            .iter()
            .map(|s| sample_curve(&s.params, s.window.0, s.window.1, scale))
            .collect(),
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_figure(spec: &FigureSpec) -> Result<String, RenderError> {
    let series = spec.series.as_ref().filter(|s| !s.is_empty());
    if series.is_none() && spec.overlays.is_empty() {
        return Err(RenderError::EmptySpec);
    }
    let scale = spec.y_scale;
    let data_value = |gdp: f64| match scale {
        YScale::Reciprocal => 1.0 / gdp,
        _ => gdp,
    };

    // x extent: observations, segment windows, markers.
    let mut xs: Vec<f64> = Vec::new();
    if let Some(s) = series {
        xs.extend(s.years());
    }
    for ov in &spec.overlays {
        match ov {
            Overlay::Hyperbolic(f) => xs.extend([f.window.0, f.window.1]),
            Overlay::Segmented(seg) => {
                xs.extend(seg.segments.iter().flat_map(|s| [s.window.0, s.window.1]))
            }
        }
    }
    xs.extend(spec.markers.iter().map(|m| m.year));
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_domain = nice_linear_domain(x_min, x_max);

    let curves: Vec<Vec<Vec<(f64, f64)>>> = spec
        .overlays
        .iter()
        .map(|ov| overlay_curves(ov, x_domain, scale))
        .collect();

    // y extent from the observations; overlays only when there are none.
    let mut ys: Vec<f64> = match series {
        Some(s) => s.observations().iter().map(|o| data_value(o.gdp)).collect(),
        None => curves.iter().flatten().flatten().map(|&(_, v)| v).collect(),
    };
    ys.retain(|v| v.is_finite());
    if ys.is_empty() {
        return Err(RenderError::EmptySpec);
    }
    if scale == YScale::Log10 {
        if let Some(s) = series {
            if let Some(o) = s.observations().iter().find(|o| o.gdp <= 0.0) {
                return Err(RenderError::NonPositiveOnLogScale {
                    year: o.year,
                    value: o.gdp,
                });
            }
        }
    }
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (y_kind, y_domain) = match scale {
        YScale::Log10 => (AxisKind::Log10, log_domain(y_min, y_max)),
        YScale::Linear | YScale::Reciprocal => (AxisKind::Linear, nice_linear_domain(y_min, y_max)),
    };

    let width = f64::from(spec.width);
    let height = f64::from(spec.height);
    let left = MARGIN_LEFT;
    let right = width - MARGIN_RIGHT;
    let top = MARGIN_TOP;
    let bottom = height - MARGIN_BOTTOM;
    let x_axis = Axis::new(AxisKind::Linear, x_domain, (left, right));
    let y_axis = Axis::new(y_kind, y_domain, (bottom, top));

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}" font-family="serif">"#,
        spec.width, spec.height, spec.width, spec.height
    );
    let _ = writeln!(
        w,
        r#"<defs><clipPath id="plot-area"><rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}"/></clipPath></defs>"#,
        right - left,
        bottom - top
    );
    let _ = writeln!(
        w,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        spec.width, spec.height
    );
    let _ = writeln!(
        w,
        r#"<text class="title" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="18">{}</text>"#,
        width / 2.0,
        top / 2.0 + 6.0,
        escape(&spec.title)
    );

    // Axes and ticks.
    let _ = writeln!(
        w,
        r#"<g class="axes" stroke="black" stroke-width="1" fill="none">"#
    );
    let _ = writeln!(
        w,
        r#"<line x1="{left:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}"/>"#
    );
    let _ = writeln!(
        w,
        r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{bottom:.2}"/>"#
    );
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, r#"<g class="ticks" font-size="12">"#);
    for (v, label) in x_axis.ticks() {
        let x = x_axis.map(v);
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 5.0,
            bottom + 20.0,
            escape(&label)
        );
    }
    for (v, label) in y_axis.ticks() {
        let y = y_axis.map(v);
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            y + 4.0,
            escape(&label)
        );
    }
    let _ = writeln!(w, "</g>");
    let y_title = match scale {
        YScale::Reciprocal => "1/GDP [1/billion 1990 GK$]",
        _ => "GDP [billion 1990 GK$]",
    };
    let _ = writeln!(
        w,
        r#"<text class="axis-title" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">Year</text>"#,
        (left + right) / 2.0,
        height - 15.0
    );
    let _ = writeln!(
        w,
        r#"<text class="axis-title" x="20" y="{:.2}" text-anchor="middle" font-size="14" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_title)
    );

    // Overlays, one path each.
    for (idx, parts) in curves.iter().enumerate() {
        let mut d = String::new();
        for part in parts.iter().filter(|p| p.len() >= 2) {
            for (i, &(t, v)) in part.iter().enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                let _ = write!(d, "{cmd}{:.2},{:.2} ", x_axis.map(t), y_axis.map(v));
            }
        }
        if d.is_empty() {
            continue;
        }
        let _ = writeln!(
            w,
            r#"<path class="overlay overlay-{idx}" d="{}" fill="none" stroke="{}" stroke-width="1.5" clip-path="url(#plot-area)"/>"#,
            d.trim_end(),
            if idx == 0 { "#1f4e9c" } else { "#b03a2e" }
        );
    }

    // Observations.
    if let Some(s) = series {
        let _ = writeln!(w, r#"<g class="observations" fill="black">"#);
        for o in s.observations() {
            let _ = writeln!(
                w,
                r#"<circle class="obs" cx="{:.2}" cy="{:.2}" r="3"/>"#,
                x_axis.map(o.year),
                y_axis.map(data_value(o.gdp))
            );
        }
        let _ = writeln!(w, "</g>");
    }

    // Markers. Labels drop to a lower row when they would run into the
    // label of a marker further left.
    let mut order: Vec<&Marker> = spec.markers.iter().collect();
    order.sort_by(|a, b| a.year.total_cmp(&b.year));
    let mut row_ends: Vec<f64> = Vec::new();
    for m in order {
        let x = x_axis.map(m.year);
        let _ = writeln!(
            w,
            r##"<line class="marker" x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{bottom:.2}" stroke="#555555" stroke-dasharray="6,4"/>"##
        );
        let start = x + 4.0;
        let row = match row_ends.iter().position(|&end| end < start) {
            Some(r) => r,
            None => {
                row_ends.push(f64::NEG_INFINITY);
                row_ends.len() - 1
            }
        };
        row_ends[row] = start + LABEL_CHAR_WIDTH * m.label.chars().count() as f64;
        let _ = writeln!(
            w,
            r#"<text class="marker-label" x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            start,
            top + 14.0 * (row + 1) as f64,
            escape(&m.label)
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::fit_hyperbolic;

    fn five() -> TimeSeries {
        TimeSeries::from_pairs(
            "X",
            &[
                (1500.0, 1.0),
                (1600.0, 1.5),
                (1700.0, 2.0),
                (1820.0, 4.0),
                (1870.0, 8.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn counts_points_and_markers() {
        let spec = FigureSpec::new("X")
            .with_series(five())
            .with_marker(Marker::new(1750.0, "claimed takeoff"));
        let svg = render_figure(&spec).unwrap();
        assert_eq!(svg.matches("<circle").count(), 5);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert_eq!(svg.matches("<path").count(), 0);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn log_axis_maps_decades_evenly() {
        let axis = Axis::new(AxisKind::Log10, (0.1, 1000.0), (400.0, 0.0));
        assert!((axis.map(10.0) - 200.0).abs() < 1e-9);
        assert!((axis.map(0.1) - 400.0).abs() < 1e-9);
        let labels: Vec<String> = axis.ticks().into_iter().map(|(_, l)| l).collect();
        assert_eq!(labels, vec!["0.1", "1", "10", "100", "1000"]);
    }

    #[test]
    fn linear_ticks_are_round() {
        let axis = Axis::new(AxisKind::Linear, (1000.0, 2000.0), (0.0, 100.0));
        let labels: Vec<String> = axis.ticks().into_iter().map(|(_, l)| l).collect();
        assert_eq!(labels.first().unwrap(), "1000");
        assert_eq!(labels.last().unwrap(), "2000");
    }

    #[test]
    fn overlay_stops_short_of_singularity() {
        let pts: Vec<(f64, f64)> = [1000.0, 1500.0, 1800.0, 2000.0, 2400.0]
            .iter()
            .map(|&t| (t, 1.0 / (5.0 - 0.002 * t)))
            .collect();
        let s = TimeSeries::from_pairs("H", &pts).unwrap();
        let fit = fit_hyperbolic(&s).unwrap();
        let clip = overlay_clip_year(&fit.params).unwrap();
        assert!((clip - 2475.0).abs() < 1e-6);
        let samples = sample_curve(&fit.params, 1000.0, 2600.0, YScale::Log10);
        assert!(samples.len() >= 200);
        let last_t = samples.last().unwrap().0;
        assert!((last_t - clip).abs() < 1e-6);
        assert!(samples
            .iter()
            .all(|&(t, v)| t <= clip && v.is_finite() && v > 0.0));
    }

    #[test]
    fn empty_spec_is_rejected() {
        assert_eq!(
            render_figure(&FigureSpec::new("none")),
            Err(RenderError::EmptySpec)
        );
    }

    #[test]
    fn escapes_text() {
        let spec = FigureSpec::new("A & B <c>").with_series(five());
        let svg = render_figure(&spec).unwrap();
        assert!(svg.contains("A &amp; B &lt;c&gt;"));
    }

    #[test]
    fn crowded_marker_labels_use_separate_rows() {
        let spec = FigureSpec::new("m")
            .with_series(five())
            .with_marker(Marker::new(1900.0, "claimed takeoff 1900"))
            .with_marker(Marker::new(1891.5, "break 1891.5"))
            .with_marker(Marker::new(0.0, "far"));
        let svg = render_figure(&spec).unwrap();
        let ys: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains("marker-label"))
            .map(|l| l.split("y=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert_eq!(ys.len(), 3);
        assert_eq!(ys[0], ys[1]);
        assert_ne!(ys[1], ys[2]);
    }
}
