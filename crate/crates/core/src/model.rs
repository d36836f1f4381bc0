//! Candidate growth models.
//!
//! Hyperbolic growth is `y(t) = 1 / (a - k t)`: the reciprocal of GDP falls
//! linearly in time and GDP diverges at the singularity `t_s = a / k`. The
//! relative growth rate of a hyperbola is proportional to its size,
//! `(1/y) dy/dt = k y`, so a hyperbola looks flat for a long time and
//! explosive for a short time without any change of regime.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Observation, TimeSeries, Year};

/// Annotation: the conventional dating of the Industrial Revolution.
pub const INDUSTRIAL_REVOLUTION: (Year, Year) = (1760.0, 1840.0);

/// Default claimed takeoff year for developed regions.
pub const DEVELOPED_TAKEOFF_YEAR: Year = 1750.0;

/// Default claimed takeoff year for less-developed regions.
pub const LESS_DEVELOPED_TAKEOFF_YEAR: Year = 1900.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("year {t} is at or beyond the singularity")]
    AtOrBeyondSingularity { t: Year },
    #[error("no singularity: k = {k} is not positive")]
    NoSingularity { k: f64 },
    #[error("zero time span between observations at year {0}")]
    ZeroSpan(Year),
}

/// Reciprocal-space line `1/y = a - k t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicParams {
    /// Reciprocal GDP at year 0, in 1/billion.
    pub a: f64,
    /// Yearly decline of reciprocal GDP; positive for growth.
    pub k: f64,
}

impl HyperbolicParams {
    pub fn new(a: f64, k: f64) -> Self {
        Self { a, k }
    }

    /// Reciprocal GDP on the fitted line. Defined for every `t`, including
    /// beyond the singularity where it turns negative.
    pub fn reciprocal_at(&self, t: Year) -> f64 {
        self.a - self.k * t
    }

    pub fn predict(&self, t: Year) -> Result<f64, ModelError> {
        predict_hyperbolic(*self, t)
    }

    pub fn singularity(&self) -> Result<SingularityTime, ModelError> {
        singularity(*self)
    }

    /// Same curve with time measured from `origin`, i.e. `t' = t - origin`.
    pub fn shifted(&self, origin: Year) -> Self {
        Self::new(self.a - self.k * origin, self.k)
    }
}

/// Year at which a growing hyperbola diverges.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SingularityTime(pub Year);

impl SingularityTime {
    pub fn year(self) -> Year {
        self.0
    }
}

impl fmt::Display for SingularityTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Stagnation: a single level.
    Constant,
    Hyperbolic,
    Exponential,
    /// Flat until the break year, exponential growth afterwards, continuous
    /// at the break.
    StagnationThenExponential {
        break_year: Year,
    },
}

impl ModelKind {
    /// Number of estimated parameters used in the information criterion.
    pub fn parameter_count(&self) -> usize {
        match self {
            ModelKind::Constant => 1,
            ModelKind::Hyperbolic | ModelKind::Exponential => 2,
            ModelKind::StagnationThenExponential { .. } => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Constant => "constant",
            ModelKind::Hyperbolic => "hyperbolic",
            ModelKind::Exponential => "exponential",
            ModelKind::StagnationThenExponential { .. } => "stagnation-then-exponential",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::StagnationThenExponential { break_year } => {
                write!(f, "{}@{break_year}", self.name())
            }
            _ => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionClass {
    Developed,
    LessDeveloped,
}

impl RegionClass {
    pub fn default_takeoff_year(self) -> Year {
        match self {
            RegionClass::Developed => DEVELOPED_TAKEOFF_YEAR,
            RegionClass::LessDeveloped => LESS_DEVELOPED_TAKEOFF_YEAR,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegionClass::Developed => "developed",
            RegionClass::LessDeveloped => "less-developed",
        }
    }
}

impl std::str::FromStr for RegionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "developed" => Ok(RegionClass::Developed),
            "less-developed" => Ok(RegionClass::LessDeveloped),
            other => Err(format!(
                "unknown region class {other:?} (expected developed or less-developed)"
            )),
        }
    }
}

impl fmt::Display for RegionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A claimed takeoff from stagnation to growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TakeoffClaim {
    pub region_class: RegionClass,
    pub claimed_year: Year,
}

impl TakeoffClaim {
    /// Claim at the default year for the class.
    pub fn for_class(region_class: RegionClass) -> Self {
        Self {
            region_class,
            claimed_year: region_class.default_takeoff_year(),
        }
    }

    pub fn at(region_class: RegionClass, claimed_year: Year) -> Self {
        Self {
            region_class,
            claimed_year,
        }
    }
}

/// Maps every observation to `(t, 1/y)`.
pub fn reciprocal(series: &TimeSeries) -> TimeSeries {
    TimeSeries::from_parts_unchecked(
        series.region().to_string(),
        series
            .observations()
            .iter()
            .map(|o| Observation::new(o.year, 1.0 / o.gdp))
            .collect(),
    )
}

pub fn predict_hyperbolic(params: HyperbolicParams, t: Year) -> Result<f64, ModelError> {
    let denom = params.reciprocal_at(t);
    if denom <= 0.0 {
        return Err(ModelError::AtOrBeyondSingularity { t });
    }
    Ok(1.0 / denom)
}

pub fn singularity(params: HyperbolicParams) -> Result<SingularityTime, ModelError> {
    if params.k <= 0.0 {
        return Err(ModelError::NoSingularity { k: params.k });
    }
    Ok(SingularityTime(params.a / params.k))
}

/// Average continuous growth rate between two observations,
/// `(ln y2 - ln y1) / (t2 - t1)`.
pub fn growth_rate_empirical(p1: Observation, p2: Observation) -> Result<f64, ModelError> {
    let span = p2.year - p1.year;
    if span == 0.0 {
        return Err(ModelError::ZeroSpan(p1.year));
    }
    Ok((p2.gdp.ln() - p1.gdp.ln()) / span)
}

/// Instantaneous relative growth rate of the hyperbola, `k * y(t)`.
pub fn growth_rate_model(params: HyperbolicParams, t: Year) -> Result<f64, ModelError> {
    Ok(params.k * predict_hyperbolic(params, t)?)
}
