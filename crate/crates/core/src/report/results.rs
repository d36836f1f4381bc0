//! Machine-readable result bundle: `verdicts.json`, `fits.json`,
//! `transitions.json` and `summary.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{TimeSeries, Year};
use crate::detection::{Diversion, TakeoffVerdict, Thresholds, TransitionClass, Verdict};
use crate::fitting::{fit_model, HyperbolicFit};
use crate::model::{ModelKind, RegionClass};

pub const VERDICTS_FILE: &str = "verdicts.json";
pub const FITS_FILE: &str = "fits.json";
pub const TRANSITIONS_FILE: &str = "transitions.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: &str = "region,claimed_year,verdict,break_year_best,p_value";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearRange {
    pub from: Year,
    pub to: Year,
}

impl From<(Year, Year)> for YearRange {
    fn from((from, to): (Year, Year)) -> Self {
        Self { from, to }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub a: f64,
    pub k: f64,
}

/// One hyperbolic fit as written to `fits.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub region: String,
    pub window: YearRange,
    pub model: String,
    pub params: ParamsReport,
    pub t_s: Option<f64>,
    pub n: usize,
    pub r2_reciprocal: f64,
    pub sse_reciprocal: f64,
    pub max_rel_err_gdp: Option<f64>,
    pub aic: Option<f64>,
    /// `region` for the configured window, `segment` for a piece of a
    /// segmented fit.
    pub role: String,
}

impl FitReport {
    /// Builds the report; `series` supplies the observations for the
    /// log-space information criterion.
    pub fn new(region: &str, fit: &HyperbolicFit, series: &TimeSeries, role: &str) -> Self {
        let aic = series
            .window(fit.window.0, fit.window.1)
            .ok()
            .and_then(|w| fit_model(&w, ModelKind::Hyperbolic).ok())
            .map(|m| m.aic);
        Self {
            region: region.to_string(),
            window: fit.window.into(),
            model: ModelKind::Hyperbolic.name().to_string(),
            params: ParamsReport {
                a: fit.params.a,
                k: fit.params.k,
            },
            t_s: fit.singularity_year(),
            n: fit.n,
            r2_reciprocal: fit.r2_reciprocal,
            sse_reciprocal: fit.sse_reciprocal,
            max_rel_err_gdp: fit.max_rel_err_gdp,
            aic,
            role: role.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub prominent: bool,
    pub stagnation_to_growth: bool,
    pub timing: bool,
}

/// One takeoff verdict as written to `verdicts.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub region: String,
    pub claimed_year: Year,
    pub region_class: RegionClass,
    pub criteria: CriteriaReport,
    pub verdict: Verdict,
    pub break_year_best: Option<Year>,
    pub f_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub pre_rate: Option<f64>,
    pub post_rate: Option<f64>,
    pub thresholds: Thresholds,
}

impl From<&TakeoffVerdict> for VerdictReport {
    fn from(v: &TakeoffVerdict) -> Self {
        let ev = v.evidence.as_ref();
        Self {
            region: v.region.clone(),
            claimed_year: v.claim.claimed_year,
            region_class: v.claim.region_class,
            criteria: CriteriaReport {
                prominent: v.criteria.prominent,
                stagnation_to_growth: v.criteria.stagnation_to_growth,
                timing: v.criteria.timing,
            },
            verdict: v.verdict,
            break_year_best: ev.map(|e| e.break_test.break_year),
            f_statistic: ev.map(|e| e.break_test.f_statistic),
            p_value: ev.map(|e| e.break_test.p_value),
            pre_rate: ev.map(|e| e.pre_rate),
            post_rate: ev.map(|e| e.post_rate),
            thresholds: v.thresholds,
        }
    }
}

/// One trajectory diversion as written to `transitions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub region: String,
    pub at: Year,
    pub class: Diversion,
    pub mean_excess_reciprocal: f64,
    pub dead_band: f64,
    pub pre_window: YearRange,
    pub post_window: YearRange,
    pub n_post: usize,
    /// `configured` for a region's default diversion check, `breakpoint`
    /// for one derived from a located break.
    pub origin: String,
}

impl TransitionReport {
    pub fn new(
        region: &str,
        tc: &TransitionClass,
        post_window: (Year, Year),
        origin: &str,
    ) -> Self {
        Self {
            region: region.to_string(),
            at: tc.at,
            class: tc.class,
            mean_excess_reciprocal: tc.mean_excess_reciprocal,
            dead_band: tc.dead_band,
            pre_window: tc.pre_fit.window.into(),
            post_window: post_window.into(),
            n_post: tc.n_post,
            origin: origin.to_string(),
        }
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, ReportError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn summary_csv(verdicts: &[VerdictReport]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for v in verdicts {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(&v.region),
            v.claimed_year,
            v.verdict,
            fmt_opt(v.break_year_best),
            fmt_opt(v.p_value)
        ));
    }
    out
}

/// Paths of the files written by [`write_results`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub verdicts: PathBuf,
    pub fits: PathBuf,
    pub transitions: PathBuf,
    pub summary: PathBuf,
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, ReportError> {
    fs::write(&path, contents).map_err(|source| ReportError::IoFailure {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the bundle into `dir`, creating it if needed.
pub fn write_results(
    dir: &Path,
    verdicts: &[VerdictReport],
    fits: &[FitReport],
    transitions: &[TransitionReport],
) -> Result<ResultBundle, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::IoFailure {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(ResultBundle {
        verdicts: write_file(dir.join(VERDICTS_FILE), &to_json(verdicts)?)?,
        fits: write_file(dir.join(FITS_FILE), &to_json(fits)?)?,
        transitions: write_file(dir.join(TRANSITIONS_FILE), &to_json(transitions)?)?,
        summary: write_file(dir.join(SUMMARY_FILE), &summary_csv(verdicts))?,
    })
}
