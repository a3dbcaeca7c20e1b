//! Hyperbolic growth fitting and turning-point diagnostics for time series
//! indexed in years before present.
//!
//! The pipeline is: parse a [`TimeSeries`], fit hyperbolic, exponential and
//! piecewise-exponential models ([`fitting`]), run the monotonicity,
//! reciprocal break-scan and model-comparison checks ([`diagnostics`]), and
//! render linear, semi-log and reciprocal views ([`render`]). [`synth`]
//! generates noisy series from a model and measures how often a two-phase
//! model is wrongly preferred on data that has no turning point.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fitting;
pub mod models;
pub mod render;
pub mod seeding;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use models::{
    validate_model_domain, Domain, DomainCheck, ExponentialModel, GrowthModel, HyperbolicModel,
    PiecewiseExponentialModel,
};
pub use timeseries::{parse_timeseries_csv, transform_series, Point, TimeSeries, Transform};
