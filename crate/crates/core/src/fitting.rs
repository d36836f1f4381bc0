//! Parameter estimation and goodness of fit.
//!
//! The hyperbolic fit is a straight-line least-squares fit of `1/y` against
//! `t`. The alternative models are fitted in log space so that they can be
//! ranked against each other with an information criterion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{TimeSeries, Year};
use crate::model::{HyperbolicParams, ModelError, ModelKind};

/// Floor for residual sums of squares. Keeps R², F and AIC finite on
/// noiseless data.
pub const EPS_SSE: f64 = 1e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("too few points: need {needed}, have {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("{side} regime has {count} observations, need at least 2")]
    EmptyRegime { side: Side, count: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Pre,
    Post,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Pre => "pre",
            Side::Post => "post",
        })
    }
}

/// Weighting of the reciprocal-space residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Plain least squares on `1/y`.
    #[default]
    Unweighted,
    /// Weights `y^4`. To first order this minimizes squared GDP-space
    /// residuals, so late (large) observations are not swamped by early ones.
    GdpSpace,
}

/// Weighted least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Weighted residual sum of squares.
    pub sse: f64,
    /// Weighted total sum of squares about the weighted mean.
    pub sst: f64,
    pub n: usize,
}

impl LineFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Least-squares line through `(xs[i], ys[i])`. Uses centered sums; `xs`
/// must contain at least two distinct values.
pub fn fit_line(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> LineFit {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..n {
        sw += w(i);
        sx += w(i) * xs[i];
        sy += w(i) * ys[i];
    }
    let mx = sx / sw;
    let my = sy / sw;

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += w(i) * dx * dx;
        sxy += w(i) * dx * dy;
        syy += w(i) * dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;

    // Residuals about the centered line; avoids cancellation in syy - slope*sxy.
    let sse = (0..n)
        .map(|i| {
            let r = ys[i] - my - slope * (xs[i] - mx);
            w(i) * r * r
        })
        .sum();

    LineFit {
        intercept,
        slope,
        sse,
        sst: syy,
        n,
    }
}

/// Hyperbolic trajectory estimated on a window of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicFit {
    pub params: HyperbolicParams,
    /// First and last observed year that entered the fit.
    pub window: (Year, Year),
    pub n: usize,
    pub r2_reciprocal: f64,
    pub sse_reciprocal: f64,
    /// Largest `|ŷ - y| / y`; `None` when the fitted line reaches the
    /// singularity at one of the observed years.
    pub max_rel_err_gdp: Option<f64>,
    pub weighting: Weighting,
}

impl HyperbolicFit {
    /// Singularity year, when the fit describes growth (`k > 0`).
    pub fn singularity_year(&self) -> Option<Year> {
        self.params.singularity().ok().map(|s| s.year())
    }
}

pub fn fit_hyperbolic(series: &TimeSeries) -> Result<HyperbolicFit, FitError> {
    fit_hyperbolic_with(series, Weighting::Unweighted)
}

pub fn fit_hyperbolic_with(
    series: &TimeSeries,
    weighting: Weighting,
) -> Result<HyperbolicFit, FitError> {
    let n = series.len();
    if n < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            found: n,
        });
    }
    let obs = series.observations();
    let ts: Vec<f64> = obs.iter().map(|o| o.year).collect();
    let rs: Vec<f64> = obs.iter().map(|o| 1.0 / o.gdp).collect();
    let weights: Option<Vec<f64>> = match weighting {
        Weighting::Unweighted => None,
        Weighting::GdpSpace => Some(obs.iter().map(|o| o.gdp.powi(4)).collect()),
    };
    let line = fit_line(&ts, &rs, weights.as_deref());
    let params = HyperbolicParams::new(line.intercept, -line.slope);

    let r2 = if line.sst <= EPS_SSE {
        1.0
    } else {
        (1.0 - line.sse / line.sst).clamp(0.0, 1.0)
    };

    let mut max_rel = Some(0.0f64);
    for o in obs {
        max_rel = match (max_rel, params.predict(o.year)) {
            (Some(m), Ok(pred)) => Some(m.max((pred - o.gdp).abs() / o.gdp)),
            _ => None,
        };
    }

    Ok(HyperbolicFit {
        params,
        window: (ts[0], ts[n - 1]),
        n,
        r2_reciprocal: r2,
        sse_reciprocal: line.sse,
        max_rel_err_gdp: max_rel,
        weighting,
    })
}

/// Estimated parameters of a [`ModelKind`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelParams {
    Constant {
        level: f64,
    },
    Hyperbolic {
        a: f64,
        k: f64,
    },
    /// `ln y = log_level + rate * t`.
    Exponential {
        log_level: f64,
        rate: f64,
    },
    StagnationThenExponential {
        level: f64,
        rate: f64,
        break_year: Year,
    },
}

impl ModelParams {
    /// Natural log of the model prediction at `t`.
    pub fn ln_predict(&self, t: Year) -> Result<f64, ModelError> {
        match *self {
            ModelParams::Constant { level } => Ok(level.ln()),
            ModelParams::Hyperbolic { a, k } => Ok(HyperbolicParams::new(a, k).predict(t)?.ln()),
            ModelParams::Exponential { log_level, rate } => Ok(log_level + rate * t),
            ModelParams::StagnationThenExponential {
                level,
                rate,
                break_year,
            } => {
                if t < break_year {
                    Ok(level.ln())
                } else {
                    Ok(level.ln() + rate * (t - break_year))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub kind: ModelKind,
    pub params: ModelParams,
    pub n: usize,
    /// Sum of squared residuals of `ln y`.
    pub sse_log: f64,
    pub p: usize,
    pub aic: f64,
}

/// `n ln(sse/n) + 2p`, with `sse` floored at [`EPS_SSE`].
pub fn aic(sse: f64, n: usize, p: usize) -> f64 {
    let n_f = n as f64;
    n_f * (sse.max(EPS_SSE) / n_f).ln() + 2.0 * p as f64
}

fn geometric_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v.ln(), c + 1));
    (sum / count as f64).exp()
}

pub fn fit_model(series: &TimeSeries, kind: ModelKind) -> Result<ModelFit, FitError> {
    let n = series.len();
    let p = kind.parameter_count();
    if n < p + 1 {
        return Err(FitError::TooFewPoints {
            needed: p + 1,
            found: n,
        });
    }
    let obs = series.observations();
    let ts: Vec<f64> = obs.iter().map(|o| o.year).collect();
    let logs: Vec<f64> = obs.iter().map(|o| o.gdp.ln()).collect();

    let params = match kind {
        ModelKind::Constant => ModelParams::Constant {
            level: geometric_mean(obs.iter().map(|o| o.gdp)),
        },
        ModelKind::Hyperbolic => {
            let fit = fit_hyperbolic(series)?;
            ModelParams::Hyperbolic {
                a: fit.params.a,
                k: fit.params.k,
            }
        }
        ModelKind::Exponential => {
            let line = fit_line(&ts, &logs, None);
            ModelParams::Exponential {
                log_level: line.intercept,
                rate: line.slope,
            }
        }
        ModelKind::StagnationThenExponential { break_year } => {
            let split = obs.partition_point(|o| o.year < break_year);
            if split < 2 {
                return Err(FitError::EmptyRegime {
                    side: Side::Pre,
                    count: split,
                });
            }
            if n - split < 2 {
                return Err(FitError::EmptyRegime {
                    side: Side::Post,
                    count: n - split,
                });
            }
            let level = geometric_mean(obs[..split].iter().map(|o| o.gdp));
            let post = fit_line(&ts[split..], &logs[split..], None);
            ModelParams::StagnationThenExponential {
                level,
                rate: post.slope,
                break_year,
            }
        }
    };

    let mut sse_log = 0.0;
    for (t, ly) in ts.iter().zip(&logs) {
        let r = ly - params.ln_predict(*t)?;
        sse_log += r * r;
    }
    Ok(ModelFit {
        kind,
        params,
        n,
        sse_log,
        p,
        aic: aic(sse_log, n, p),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingEntry {
    pub kind: ModelKind,
    pub outcome: Result<ModelFit, FitError>,
}

impl RankingEntry {
    pub fn is_feasible(&self) -> bool {
        self.outcome.is_ok()
    }
}

/// Fits every kind and sorts by ascending AIC, then by parameter count, then
/// by the order given. Kinds that cannot be fitted are kept, marked
/// infeasible, after all feasible ones.
pub fn compare_models(series: &TimeSeries, kinds: &[ModelKind]) -> Vec<RankingEntry> {
    let mut entries: Vec<(usize, RankingEntry)> = kinds
        .iter()
        .enumerate()
        .map(|(idx, &kind)| {
            (
                idx,
                RankingEntry {
                    kind,
                    outcome: fit_model(series, kind),
                },
            )
        })
        .collect();
    entries.sort_by(|(ia, a), (ib, b)| match (&a.outcome, &b.outcome) {
        (Ok(fa), Ok(fb)) => fa
            .aic
            .total_cmp(&fb.aic)
            .then(fa.p.cmp(&fb.p))
            .then(ia.cmp(ib)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => ia.cmp(ib),
    });
    entries.into_iter().map(|(_, e)| e).collect()
}
