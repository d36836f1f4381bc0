//! Tests of "takeoff from stagnation to growth" claims against historical
//! GDP series.
//!
//! The pipeline is: parse a regional GDP table ([`dataset`]), fit
//! hyperbolic trajectories in reciprocal space ([`fitting`], [`model`]),
//! test claimed takeoff years and locate breaks ([`detection`]), and write
//! figures and result files ([`report`]).

pub mod dataset;
pub mod detection;
pub mod fitting;
pub mod model;
pub mod report;

pub use dataset::{Observation, RegionDataset, TimeSeries, Year};
pub use detection::{
    chow_break_test, classify_transition, find_breakpoints, takeoff_test, BreakTest, Diversion,
    SegmentedFit, TakeoffVerdict, Thresholds, TransitionClass, Verdict,
};
pub use fitting::{fit_hyperbolic, fit_model, HyperbolicFit, ModelFit, Weighting, EPS_SSE};
pub use model::{HyperbolicParams, ModelKind, RegionClass, TakeoffClaim};
