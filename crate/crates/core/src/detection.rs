//! Structural breaks, takeoff signatures and trajectory diversions.
//!
//! Everything here works in reciprocal space, where a single hyperbola is a
//! straight line. A break test therefore asks whether two lines describe
//! `1/y` significantly better than one.
//!
//! A takeoff in the sense tested by [`takeoff_test`] needs all of:
//!
//! 1. a prominent change: a significant break near the claimed year,
//! 2. from stagnation to growth: near-zero growth before the break and
//!    clearly positive growth after it,
//! 3. at the claimed time: the located break is within `tau` years.
//!
//! A change from one growth trajectory to another fails the second
//! criterion. Such diversions are described by [`classify_transition`]
//! instead.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::dataset::{DatasetError, Observation, TimeSeries, Year};
use crate::fitting::{
    fit_hyperbolic_with, fit_line, FitError, HyperbolicFit, Side, Weighting, EPS_SSE,
};
use crate::model::{growth_rate_empirical, TakeoffClaim};

/// Minimum observations per segment of a reciprocal-space line.
pub const MIN_SEGMENT: usize = 3;

/// Parameters per reciprocal-space line.
const LINE_PARAMS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("{side} side of the break has {count} observations, need {MIN_SEGMENT}")]
    InsufficientSide { side: Side, count: usize },
    #[error("too few points: need {needed}, have {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("max_breaks must be 0, 1 or 2, got {0}")]
    UnsupportedBreakCount(usize),
    #[error("post window ({from}, {to}) contains no observations")]
    EmptyWindow { from: Year, to: Year },
    #[error("pre window must end before the post window starts")]
    OverlappingWindows,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Chow-style comparison of one pooled line against two lines split at
/// `break_year`. Observations strictly before the break go left, the rest
/// right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakTest {
    pub break_year: Year,
    pub f_statistic: f64,
    pub p_value: f64,
    pub sse_pooled: f64,
    pub sse_split: f64,
    pub n_pre: usize,
    pub n_post: usize,
}

fn reciprocal_points(obs: &[Observation]) -> (Vec<f64>, Vec<f64>) {
    obs.iter().map(|o| (o.year, 1.0 / o.gdp)).unzip()
}

fn segment_sse(obs: &[Observation]) -> f64 {
    let (ts, rs) = reciprocal_points(obs);
    fit_line(&ts, &rs, None).sse
}

/// Upper tail of the F distribution with `(2, dof)` degrees of freedom.
fn f_upper_tail(f: f64, dof: usize) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    let dist = FisherSnedecor::new(LINE_PARAMS as f64, dof as f64)
        .expect("degrees of freedom are positive");
    dist.sf(f).clamp(0.0, 1.0)
}

fn break_test_on(obs: &[Observation], break_year: Year) -> Result<BreakTest, DetectionError> {
    let split = obs.partition_point(|o| o.year < break_year);
    let (pre, post) = obs.split_at(split);
    if pre.len() < MIN_SEGMENT {
        return Err(DetectionError::InsufficientSide {
            side: Side::Pre,
            count: pre.len(),
        });
    }
    if post.len() < MIN_SEGMENT {
        return Err(DetectionError::InsufficientSide {
            side: Side::Post,
            count: post.len(),
        });
    }
    let sse_pooled = segment_sse(obs);
    let sse_split = segment_sse(pre) + segment_sse(post);
    let dof = obs.len() - 2 * LINE_PARAMS;

    let (f_statistic, p_value) = if sse_pooled <= EPS_SSE {
        (0.0, 1.0)
    } else {
        let gain = (sse_pooled - sse_split).max(0.0) / LINE_PARAMS as f64;
        let f = gain / (sse_split.max(EPS_SSE) / dof as f64);
        (f, f_upper_tail(f, dof))
    };

    Ok(BreakTest {
        break_year,
        f_statistic,
        p_value,
        sse_pooled,
        sse_split,
        n_pre: pre.len(),
        n_post: post.len(),
    })
}

pub fn chow_break_test(series: &TimeSeries, break_year: Year) -> Result<BreakTest, DetectionError> {
    break_test_on(series.observations(), break_year)
}

/// Best split of a series into `breaks + 1` reciprocal-space lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Break years (midpoints between neighbouring observations).
    pub breakpoints: Vec<Year>,
    /// Index of the first observation of every segment after the first.
    pub split_indices: Vec<usize>,
    pub total_sse: f64,
}

fn midpoint(obs: &[Observation], idx: usize) -> Year {
    0.5 * (obs[idx - 1].year + obs[idx].year)
}

/// Exhaustive search for the SSE-minimizing partition with exactly `breaks`
/// breakpoints, each segment holding at least [`MIN_SEGMENT`] observations.
/// Candidates are scanned in lexicographic order and a later candidate only
/// replaces the incumbent when it is lower by more than [`EPS_SSE`], so ties
/// resolve to the earliest breakpoints.
pub fn optimal_partition(series: &TimeSeries, breaks: usize) -> Result<Partition, DetectionError> {
    if breaks > 2 {
        return Err(DetectionError::UnsupportedBreakCount(breaks));
    }
    let obs = series.observations();
    let n = obs.len();
    let needed = MIN_SEGMENT * (breaks + 1);
    if n < needed {
        return Err(DetectionError::TooFewPoints { needed, found: n });
    }

    // sse[i][j] for the segment obs[i..j]; only lengths >= MIN_SEGMENT are used.
    let mut cache = vec![vec![f64::NAN; n + 1]; n + 1];
    let mut sse = |i: usize, j: usize| {
        if cache[i][j].is_nan() {
            cache[i][j] = segment_sse(&obs[i..j]);
        }
        cache[i][j]
    };

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut consider = |splits: Vec<usize>, total: f64| match &best {
        Some((_, incumbent)) if total >= incumbent - EPS_SSE => {}
        _ => best = Some((splits, total)),
    };

    match breaks {
        0 => consider(Vec::new(), sse(0, n)),
        1 => {
            for i in MIN_SEGMENT..=n - MIN_SEGMENT {
                let total = sse(0, i) + sse(i, n);
                consider(vec![i], total);
            }
        }
        _ => {
            for i in MIN_SEGMENT..=n - 2 * MIN_SEGMENT {
                for j in i + MIN_SEGMENT..=n - MIN_SEGMENT {
                    let total = sse(0, i) + sse(i, j) + sse(j, n);
                    consider(vec![i, j], total);
                }
            }
        }
    }

    let (split_indices, total_sse) = best.expect("at least one admissible partition");
    Ok(Partition {
        breakpoints: split_indices.iter().map(|&i| midpoint(obs, i)).collect(),
        split_indices,
        total_sse,
    })
}

/// Piecewise-hyperbolic description of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedFit {
    pub breakpoints: Vec<Year>,
    pub segments: Vec<HyperbolicFit>,
    pub total_sse: f64,
    /// Best total SSE found with 0, 1, ... breaks, before the parsimony rule.
    pub sse_by_breaks: Vec<f64>,
}

/// Relative SSE reduction an extra break must achieve to be kept.
pub const PARSIMONY_GAIN: f64 = 0.01;

/// Searches for up to `max_breaks` breakpoints. More breaks are accepted
/// only when they cut the total SSE of the currently accepted partition by
/// more than 1 % (and by more than [`EPS_SSE`]).
pub fn find_breakpoints(
    series: &TimeSeries,
    max_breaks: usize,
) -> Result<SegmentedFit, DetectionError> {
    if max_breaks > 2 {
        return Err(DetectionError::UnsupportedBreakCount(max_breaks));
    }
    let needed = MIN_SEGMENT * (max_breaks + 1);
    if series.len() < needed {
        return Err(DetectionError::TooFewPoints {
            needed,
            found: series.len(),
        });
    }

    let partitions = (0..=max_breaks)
        .map(|b| optimal_partition(series, b))
        .collect::<Result<Vec<_>, _>>()?;
    let mut accepted = 0;
    for (b, part) in partitions.iter().enumerate().skip(1) {
        let current = partitions[accepted].total_sse;
        if current - part.total_sse > (PARSIMONY_GAIN * current).max(EPS_SSE) {
            accepted = b;
        }
    }

    let chosen = &partitions[accepted];
    let obs = series.observations();
    let mut bounds = vec![0];
    bounds.extend(&chosen.split_indices);
    bounds.push(obs.len());
    let segments = bounds
        .windows(2)
        .map(|w| {
            let seg = TimeSeries::from_parts_unchecked(
                series.region().to_string(),
                obs[w[0]..w[1]].to_vec(),
            );
            fit_hyperbolic_with(&seg, Weighting::Unweighted)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SegmentedFit {
        breakpoints: chosen.breakpoints.clone(),
        total_sse: segments.iter().map(|s| s.sse_reciprocal).sum(),
        segments,
        sse_by_breaks: partitions.iter().map(|p| p.total_sse).collect(),
    })
}

/// Decision thresholds of the takeoff test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Significance level of the break test.
    pub alpha: f64,
    /// Growth rates below this (per year) count as stagnation.
    pub r_stag: f64,
    /// Minimum growth rate (per year) after a takeoff.
    pub r_growth: f64,
    /// Largest distance in years between the located break and the claim.
    pub tau: f64,
    /// Half-width in years of the window searched around the claim.
    pub half_window: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            r_stag: 0.001,
            r_growth: 0.005,
            tau: 30.0,
            half_window: 150.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Present,
    Absent,
    Undecidable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Present => "present",
            Verdict::Absent => "absent",
            Verdict::Undecidable => "undecidable",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Criteria {
    pub prominent: bool,
    pub stagnation_to_growth: bool,
    pub timing: bool,
}

impl Criteria {
    pub fn all(&self) -> bool {
        self.prominent && self.stagnation_to_growth && self.timing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TakeoffEvidence {
    /// Break test at the best local break year.
    pub break_test: BreakTest,
    /// Average growth rate over the observations before the break.
    pub pre_rate: f64,
    /// Average growth rate over the observations after the break.
    pub post_rate: f64,
    /// Range of the observations that entered the test.
    pub test_window: (Year, Year),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeoffVerdict {
    pub region: String,
    pub claim: TakeoffClaim,
    pub criteria: Criteria,
    pub verdict: Verdict,
    pub evidence: Option<TakeoffEvidence>,
    /// Side of the claim lacking observations, for undecidable verdicts.
    pub missing_side: Option<Side>,
    pub thresholds: Thresholds,
}

/// Average continuous growth rate across a run of observations, i.e. the
/// rate between its first and last point. This equals the duration-weighted
/// mean of the rates between consecutive observations.
pub fn mean_growth_rate(obs: &[Observation]) -> Option<f64> {
    match (obs.first(), obs.last()) {
        (Some(&first), Some(&last)) if last.year > first.year => {
            growth_rate_empirical(first, last).ok()
        }
        _ => None,
    }
}

/// Observations used by the takeoff test: those within `half_window` of the
/// claim, widened on either side to the nearest [`MIN_SEGMENT`] observations
/// when the window holds fewer. Returns the side lacking data otherwise.
fn takeoff_window(
    obs: &[Observation],
    claimed: Year,
    half_window: f64,
) -> Result<&[Observation], Side> {
    let split = obs.partition_point(|o| o.year < claimed);
    if split < MIN_SEGMENT {
        return Err(Side::Pre);
    }
    if obs.len() - split < MIN_SEGMENT {
        return Err(Side::Post);
    }
    let lo = obs.partition_point(|o| o.year < claimed - half_window);
    let hi = obs.partition_point(|o| o.year <= claimed + half_window);
    let start = lo.min(split - MIN_SEGMENT);
    let end = hi.max(split + MIN_SEGMENT);
    Ok(&obs[start..end])
}

/// Evaluates the three-criterion takeoff signature at `claim`.
pub fn takeoff_test(
    series: &TimeSeries,
    claim: TakeoffClaim,
    thresholds: Thresholds,
) -> TakeoffVerdict {
    let claimed = claim.claimed_year;
    let undecidable = |side: Side| TakeoffVerdict {
        region: series.region().to_string(),
        claim,
        criteria: Criteria::default(),
        verdict: Verdict::Undecidable,
        evidence: None,
        missing_side: Some(side),
        thresholds,
    };

    let window = match takeoff_window(series.observations(), claimed, thresholds.half_window) {
        Ok(w) => w,
        Err(side) => return undecidable(side),
    };

    let admissible: Vec<usize> = (MIN_SEGMENT..=window.len() - MIN_SEGMENT).collect();
    let near: Vec<usize> = admissible
        .iter()
        .copied()
        .filter(|&i| (midpoint(window, i) - claimed).abs() <= thresholds.half_window)
        .collect();
    let candidates = if near.is_empty() { admissible } else { near };

    let mut best: Option<BreakTest> = None;
    for &i in &candidates {
        let test = break_test_on(window, midpoint(window, i))
            .expect("candidate keeps both sides populated");
        match &best {
            Some(b) if test.sse_split >= b.sse_split - EPS_SSE => {}
            _ => best = Some(test),
        }
    }
    let break_test = best.expect("window always admits the break straddling the claim");

    let split = window.partition_point(|o| o.year < break_test.break_year);
    let pre_rate = mean_growth_rate(&window[..split]).unwrap_or(0.0);
    let post_rate = mean_growth_rate(&window[split..]).unwrap_or(0.0);

    let criteria = Criteria {
        prominent: break_test.p_value < thresholds.alpha,
        stagnation_to_growth: pre_rate < thresholds.r_stag
            && post_rate >= (10.0 * pre_rate).max(thresholds.r_growth),
        timing: (break_test.break_year - claimed).abs() <= thresholds.tau,
    };
    let verdict = if criteria.all() {
        Verdict::Present
    } else {
        Verdict::Absent
    };

    TakeoffVerdict {
        region: series.region().to_string(),
        claim,
        criteria,
        verdict,
        evidence: Some(TakeoffEvidence {
            break_test,
            pre_rate,
            post_rate,
            test_window: (window[0].year, window[window.len() - 1].year),
        }),
        missing_side: None,
        thresholds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diversion {
    /// GDP below the extrapolated trajectory.
    Slower,
    /// GDP above the extrapolated trajectory.
    Faster,
    None,
}

impl Diversion {
    pub fn as_str(self) -> &'static str {
        match self {
            Diversion::Slower => "slower",
            Diversion::Faster => "faster",
            Diversion::None => "none",
        }
    }
}

/// Relative width of the dead band around the extrapolated trajectory.
pub const DEAD_BAND: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionClass {
    /// Midpoint between the last pre-window and first post-window observation.
    pub at: Year,
    pub class: Diversion,
    /// Mean of `1/y - (a - k t)` over the post-window observations.
    pub mean_excess_reciprocal: f64,
    pub dead_band: f64,
    pub pre_fit: HyperbolicFit,
    pub n_post: usize,
}

pub fn classify_transition(
    series: &TimeSeries,
    pre_window: (Year, Year),
    post_window: (Year, Year),
) -> Result<TransitionClass, DetectionError> {
    classify_transition_with(series, pre_window, post_window, Weighting::Unweighted)
}

/// Fits the pre window, extrapolates its reciprocal line over the post
/// window and classifies the mean signed excess. The dead band is 2 % of the
/// mean absolute extrapolated reciprocal level over the post observations,
/// so it depends on the trajectory only and not on the post data.
pub fn classify_transition_with(
    series: &TimeSeries,
    pre_window: (Year, Year),
    post_window: (Year, Year),
    weighting: Weighting,
) -> Result<TransitionClass, DetectionError> {
    if pre_window.1 >= post_window.0 {
        return Err(DetectionError::OverlappingWindows);
    }
    let pre = series.window(pre_window.0, pre_window.1)?;
    let post = series.window(post_window.0, post_window.1)?;
    let pre_fit = fit_hyperbolic_with(&pre, weighting)?;
    if post.is_empty() {
        return Err(DetectionError::EmptyWindow {
            from: post_window.0,
            to: post_window.1,
        });
    }

    let n_post = post.len();
    let (mut excess, mut level) = (0.0, 0.0);
    for o in post.observations() {
        let trend = pre_fit.params.reciprocal_at(o.year);
        excess += 1.0 / o.gdp - trend;
        level += trend;
    }
    let mean_excess = excess / n_post as f64;
    let dead_band = DEAD_BAND * (level / n_post as f64).abs();

    let class = if mean_excess > dead_band {
        Diversion::Slower
    } else if mean_excess < -dead_band {
        Diversion::Faster
    } else {
        Diversion::None
    };
    let last_pre = pre
        .last_year()
        .expect("fit succeeded on a non-empty window");
    let first_post = post.first_year().expect("checked non-empty");

    Ok(TransitionClass {
        at: 0.5 * (last_pre + first_post),
        class,
        mean_excess_reciprocal: mean_excess,
        dead_band,
        pre_fit,
        n_post,
    })
}
