//! Orchestration behind the `hypergrowth` binary: region profiles, the
//! per-region analysis matrix and writing of the result bundle.

use std::fs;
use std::path::{Path, PathBuf};

use hypergrowth::dataset::{
    parse_long_csv, parse_maddison_horizontal, DatasetError, RegionDataset,
};
use hypergrowth::detection::{
    classify_transition_with, find_breakpoints, DetectionError, MIN_SEGMENT,
};
use hypergrowth::fitting::{fit_hyperbolic_with, FitError};
use hypergrowth::report::{
    render_figure, write_results, FigureSpec, FitReport, Marker, Overlay, RenderError, ReportError,
    TransitionReport, VerdictReport,
};
use hypergrowth::{
    takeoff_test, RegionClass, TakeoffClaim, Thresholds, TimeSeries, Weighting, Year,
};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag values that the argument parser cannot catch.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Long,
    Maddison,
}

pub fn read_dataset(path: &Path, format: InputFormat) -> Result<RegionDataset, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let ds = match format {
        InputFormat::Long => parse_long_csv(&text),
        InputFormat::Maddison => parse_maddison_horizontal(&text),
    }
    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(ds.with_source(path.display().to_string()))
}

/// Looks up a region, listing the available ones when it is missing.
pub fn region<'a>(ds: &'a RegionDataset, name: &str) -> Result<&'a TimeSeries, CliError> {
    ds.get(name).ok_or_else(|| {
        let names: Vec<&str> = ds.regions().collect();
        CliError::Data(format!(
            "unknown region {name:?}; available regions: {}",
            names.join(", ")
        ))
    })
}

/// Pre/post windows of a configured trajectory-diversion check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionWindows {
    pub pre: (Year, Year),
    pub post: (Year, Year),
}

/// Per-region defaults for the analysis matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProfile {
    pub class: RegionClass,
    pub claims: Vec<Year>,
    pub fit_window: (Year, Year),
    pub transition: Option<TransitionWindows>,
}

const OPEN_END: Year = 1.0e6;
const STANDARD_WINDOW: (Year, Year) = (1000.0, 1955.0);

impl RegionProfile {
    fn new(class: RegionClass, claims: &[Year], fit_window: (Year, Year)) -> Self {
        Self {
            class,
            claims: claims.to_vec(),
            fit_window,
            transition: None,
        }
    }

    fn with_transition(mut self, pre: (Year, Year), post_from: Year) -> Self {
        self.transition = Some(TransitionWindows {
            pre,
            post: (post_from, OPEN_END),
        });
        self
    }

    /// Defaults for the seven regional aggregates. Other regions are
    /// treated as developed with the standard window.
    pub fn for_region(name: &str) -> Self {
        use RegionClass::*;
        match name {
            "World" => Self::new(Developed, &[1750.0, 1900.0], STANDARD_WINDOW),
            "Western Europe" | "Eastern Europe" | "Former USSR" => {
                Self::new(Developed, &[1750.0], STANDARD_WINDOW)
            }
            "Asia" => Self::new(LessDeveloped, &[1900.0], STANDARD_WINDOW)
                .with_transition((1500.0, 1940.0), 1941.0),
            "Africa" => Self::new(LessDeveloped, &[1900.0], (1820.0, 1955.0))
                .with_transition((1.0, 1820.0), 1821.0),
            "Latin America" => Self::new(LessDeveloped, &[1900.0], (1700.0, 1870.0))
                .with_transition((1700.0, 1870.0), 1871.0),
            _ => Self::new(Developed, &[1750.0], STANDARD_WINDOW),
        }
    }
}

/// Flag-level overrides applied on top of every selected region's profile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileOverrides {
    pub class: Option<RegionClass>,
    pub fit_window: Option<(Year, Year)>,
    pub claims: Vec<Year>,
}

impl ProfileOverrides {
    pub fn apply(&self, mut profile: RegionProfile) -> RegionProfile {
        if let Some(class) = self.class {
            profile.class = class;
            if self.claims.is_empty() {
                profile.claims = vec![class.default_takeoff_year()];
            }
        }
        if let Some(w) = self.fit_window {
            profile.fit_window = w;
        }
        if !self.claims.is_empty() {
            profile.claims = self.claims.clone();
        }
        profile
    }
}

pub fn validate_thresholds(t: &Thresholds) -> Result<(), CliError> {
    let fields = [
        ("alpha", t.alpha),
        ("r-stag", t.r_stag),
        ("r-growth", t.r_growth),
        ("tau", t.tau),
        ("half-window", t.half_window),
    ];
    for (name, v) in fields {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Usage(format!(
                "--{name} must be positive, got {v}"
            )));
        }
    }
    if t.alpha >= 1.0 {
        return Err(CliError::Usage(format!(
            "--alpha must be below 1, got {}",
            t.alpha
        )));
    }
    Ok(())
}

/// Parses `FROM:TO` into a year window.
pub fn parse_window(text: &str) -> Result<(Year, Year), String> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| format!("expected FROM:TO, got {text:?}"))?;
    let from: Year = a.trim().parse().map_err(|_| format!("bad year {a:?}"))?;
    let to: Year = b.trim().parse().map_err(|_| format!("bad year {b:?}"))?;
    if !(from.is_finite() && to.is_finite()) || from > to {
        return Err(format!("invalid window {text:?}"));
    }
    Ok((from, to))
}

/// Everything computed for one region.
#[derive(Debug, Clone)]
pub struct RegionAnalysis {
    pub region: String,
    pub verdicts: Vec<VerdictReport>,
    pub fits: Vec<FitReport>,
    pub transitions: Vec<TransitionReport>,
    pub svg: String,
    /// Checks skipped for lack of data; reported on standard error.
    pub notes: Vec<String>,
}

/// Largest admissible break count for a series of `n` observations.
pub fn max_breaks_for(n: usize) -> usize {
    (n / MIN_SEGMENT).saturating_sub(1).min(2)
}

pub fn analyze_region(
    series: &TimeSeries,
    profile: &RegionProfile,
    thresholds: Thresholds,
    weighting: Weighting,
) -> Result<RegionAnalysis, CliError> {
    let name = series.region();
    let (from, to) = profile.fit_window;
    let window = series.window(from, to)?;
    let fit = fit_hyperbolic_with(&window, weighting)
        .map_err(|e| CliError::Data(format!("{name}: fit window {from}-{to}: {e}")))?;
    let mut fits = vec![FitReport::new(name, &fit, series, "region")];
    let mut notes = Vec::new();

    let verdicts: Vec<VerdictReport> = profile
        .claims
        .iter()
        .map(|&year| {
            let v = takeoff_test(series, TakeoffClaim::at(profile.class, year), thresholds);
            VerdictReport::from(&v)
        })
        .collect();

    let mut transitions = Vec::new();
    let breaks = max_breaks_for(series.len());
    let segmented = if series.len() >= MIN_SEGMENT {
        Some(find_breakpoints(series, breaks)?)
    } else {
        notes.push(format!(
            "{name}: too few observations for a breakpoint search"
        ));
        None
    };
    if let Some(seg) = &segmented {
        for s in &seg.segments {
            fits.push(FitReport::new(name, s, series, "segment"));
        }
        for i in 0..seg.breakpoints.len() {
            let pre = seg.segments[i].window;
            let post = seg.segments[i + 1].window;
            let tc = classify_transition_with(series, pre, post, weighting)?;
            transitions.push(TransitionReport::new(name, &tc, post, "breakpoint"));
        }
    }
    if let Some(tw) = profile.transition {
        match classify_transition_with(series, tw.pre, tw.post, weighting) {
            Ok(tc) => transitions.push(TransitionReport::new(name, &tc, tw.post, "configured")),
            Err(e) => notes.push(format!("{name}: configured transition check skipped: {e}")),
        }
    }

    let mut spec = FigureSpec::new(name)
        .with_series(series.clone())
        .with_overlay(Overlay::Hyperbolic(fit));
    if let Some(seg) = segmented.filter(|s| !s.breakpoints.is_empty()) {
        for &b in &seg.breakpoints {
            spec = spec.with_marker(Marker::new(b, format!("break {b}")));
        }
        spec = spec.with_overlay(Overlay::Segmented(seg));
    }
    for &year in &profile.claims {
        spec = spec.with_marker(Marker::new(year, format!("claimed takeoff {year}")));
    }
    let svg = render_figure(&spec)?;

    Ok(RegionAnalysis {
        region: name.to_string(),
        verdicts,
        fits,
        transitions,
        svg,
        notes,
    })
}

/// Analyses `regions` concurrently; results keep the order of `regions`.
pub fn analyze_regions(
    ds: &RegionDataset,
    regions: &[String],
    overrides: &ProfileOverrides,
    thresholds: Thresholds,
    weighting: Weighting,
) -> Result<Vec<RegionAnalysis>, CliError> {
    let series = regions
        .iter()
        .map(|r| region(ds, r))
        .collect::<Result<Vec<_>, _>>()?;
    series
        .par_iter()
        .map(|s| {
            let profile = overrides.apply(RegionProfile::for_region(s.region()));
            analyze_region(s, &profile, thresholds, weighting)
        })
        .collect()
}

/// File name of a region's figure: lower-case, non-alphanumerics as `_`.
pub fn figure_file_name(region: &str) -> String {
    let stem: String = region
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("{stem}.svg")
}

/// Writes the result bundle and one figure per region into `out`.
pub fn write_analysis(out: &Path, analyses: &[RegionAnalysis]) -> Result<Vec<PathBuf>, CliError> {
    let verdicts: Vec<VerdictReport> = analyses.iter().flat_map(|a| a.verdicts.clone()).collect();
    let fits: Vec<FitReport> = analyses.iter().flat_map(|a| a.fits.clone()).collect();
    let transitions: Vec<TransitionReport> = analyses
        .iter()
        .flat_map(|a| a.transitions.clone())
        .collect();
    let bundle = write_results(out, &verdicts, &fits, &transitions)?;
    let mut written = vec![
        bundle.verdicts,
        bundle.fits,
        bundle.transitions,
        bundle.summary,
    ];
    for a in analyses {
        let path = out.join(figure_file_name(&a.region));
        fs::write(&path, &a.svg)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

/// JSON view of a breakpoint search for the `segment` command.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentReport {
    pub region: String,
    pub max_breaks: usize,
    pub breakpoints: Vec<Year>,
    pub total_sse: f64,
    pub sse_by_breaks: Vec<f64>,
    pub segments: Vec<FitReport>,
}

pub fn segment_region(series: &TimeSeries, max_breaks: usize) -> Result<SegmentReport, CliError> {
    if max_breaks > 2 {
        return Err(CliError::Usage(format!(
            "--max-breaks must be 0, 1 or 2, got {max_breaks}"
        )));
    }
    let seg = find_breakpoints(series, max_breaks)?;
    Ok(SegmentReport {
        region: series.region().to_string(),
        max_breaks,
        breakpoints: seg.breakpoints.clone(),
        total_sse: seg.total_sse,
        sse_by_breaks: seg.sse_by_breaks.clone(),
        segments: seg
            .segments
            .iter()
            .map(|s| FitReport::new(series.region(), s, series, "segment"))
            .collect(),
    })
}
