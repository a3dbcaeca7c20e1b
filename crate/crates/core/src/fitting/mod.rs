//! Parameter estimation for the growth-model family.
//!
//! Hyperbolic models are fitted by ordinary least squares on the reciprocal
//! series (the denominator is linear in its coefficients) and optionally
//! refined by Levenberg–Marquardt on the raw scale. Exponential models are
//! fitted by OLS on the log series; the piecewise model searches breakpoints
//! over the observed times.

mod bootstrap;
mod lsq;
mod nls;
mod piecewise;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Domain, ExponentialModel, GrowthModel, HyperbolicModel, MAX_ORDER};
use crate::models::{validate_model_domain, DomainCheck};
use crate::timeseries::TimeSeries;

pub use bootstrap::{bootstrap_parameters, BootstrapReport, ParameterInterval, MIN_RESAMPLES};
pub use nls::refine_nls;
pub use piecewise::{fit_piecewise_exponential, DEFAULT_MIN_SEGMENT};

pub(crate) use lsq::{line_fit, LineFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    ReciprocalOls,
    Nls,
    ReciprocalThenNls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRescale {
    Auto,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    pub order: usize,
    pub max_nls_iterations: usize,
    pub nls_tolerance: f64,
    pub time_rescale: TimeRescale,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::ReciprocalThenNls,
            order: 2,
            max_nls_iterations: 100,
            nls_tolerance: 1e-10,
            time_rescale: TimeRescale::Auto,
        }
    }
}

impl FitConfig {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }

    pub fn with_method(mut self, method: FitMethod) -> Self {
        self.method = method;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::Validation(format!(
                "order must be 1..={MAX_ORDER}, got {}",
                self.order
            )));
        }
        if self.max_nls_iterations < 1 {
            return Err(Error::Validation("max_nls_iterations must be >= 1".into()));
        }
        if !(self.nls_tolerance > 0.0) {
            return Err(Error::Validation("nls_tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// A fitted model with residual statistics on the raw, reciprocal and log
/// scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: GrowthModel,
    /// Estimator that produced this fit, e.g. `reciprocal_ols` or `nls`.
    pub method: String,
    pub rss_raw: f64,
    pub rss_reciprocal: f64,
    pub rss_log: f64,
    pub n: usize,
    pub p: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<FitConfig>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl FitResult {
    pub(crate) fn new(
        model: GrowthModel,
        method: &str,
        times: &[f64],
        values: &[f64],
    ) -> Result<Self> {
        let stats = residual_stats(&model, times, values)?;
        Ok(Self {
            p: model.parameter_count(),
            model,
            method: method.to_string(),
            rss_raw: stats.raw,
            rss_reciprocal: stats.reciprocal,
            rss_log: stats.log,
            n: times.len(),
            config: None,
            converged: true,
            iterations: 0,
            notes: Vec::new(),
        })
    }

    pub fn hyperbolic(&self) -> Option<&HyperbolicModel> {
        match &self.model {
            GrowthModel::Hyperbolic(h) => Some(h),
            _ => None,
        }
    }
}

struct ResidualStats {
    raw: f64,
    reciprocal: f64,
    log: f64,
}

fn residual_stats(model: &GrowthModel, times: &[f64], values: &[f64]) -> Result<ResidualStats> {
    let mut s = ResidualStats {
        raw: 0.0,
        reciprocal: 0.0,
        log: 0.0,
    };
    for (&t, &v) in times.iter().zip(values) {
        let m = model.eval(t)?;
        s.raw += (v - m).powi(2);
        s.reciprocal += (1.0 / v - 1.0 / m).powi(2);
        s.log += (v.ln() - m.ln()).powi(2);
    }
    Ok(s)
}

pub(crate) fn count_distinct(times: &[f64]) -> usize {
    let mut t = times.to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.len()
}

fn time_scale(times: &[f64], rescale: TimeRescale) -> f64 {
    let s = times.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    match rescale {
        TimeRescale::Auto if s > 0.0 => s,
        _ => 1.0,
    }
}

fn data_domain(times: &[f64]) -> Domain {
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Domain { t_min: lo, t_max: hi }
}

/// Reciprocal-space OLS on raw slices; duplicate times are allowed.
pub(crate) fn reciprocal_ols(
    times: &[f64],
    values: &[f64],
    order: usize,
    rescale: TimeRescale,
) -> Result<HyperbolicModel> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::Validation(format!(
            "order must be 1..={MAX_ORDER}, got {order}"
        )));
    }
    let distinct = count_distinct(times);
    if distinct < order + 2 {
        return Err(Error::Underdetermined {
            needed: order + 2,
            got: distinct,
        });
    }
    let s = time_scale(times, rescale);
    let u: Vec<f64> = times.iter().map(|t| t / s).collect();
    let y: Vec<f64> = values.iter().map(|v| 1.0 / v).collect();
    let scaled = lsq::poly_least_squares(&u, &y, order)?;
    let coefficients = scaled
        .iter()
        .enumerate()
        .map(|(i, b)| b / s.powi(i as i32))
        .collect();
    let model = HyperbolicModel {
        order,
        coefficients,
        domain: data_domain(times),
    };
    match validate_model_domain(&model) {
        DomainCheck::Valid => Ok(model),
        DomainCheck::Invalid(t) => Err(Error::Positivity { t }),
    }
}

/// OLS of `1/value` on `{1, t, ..., t^order}`.
///
/// Times are divided by `max |t|` before solving and the coefficients are
/// unscaled afterwards. The returned model's domain is the data time range;
/// a fit whose denominator is not positive on that range is an error.
pub fn fit_reciprocal_polynomial(ts: &TimeSeries, order: usize) -> Result<FitResult> {
    fit_reciprocal_polynomial_with(ts, &FitConfig::with_order(order).with_method(FitMethod::ReciprocalOls))
}

pub fn fit_reciprocal_polynomial_with(ts: &TimeSeries, config: &FitConfig) -> Result<FitResult> {
    config.check()?;
    let (times, values) = (ts.times(), ts.values());
    let model = reciprocal_ols(&times, &values, config.order, config.time_rescale)?;
    let mut fit = FitResult::new(model.into(), "reciprocal_ols", &times, &values)?;
    fit.config = Some(FitConfig {
        method: FitMethod::ReciprocalOls,
        ..*config
    });
    Ok(fit)
}

/// Hyperbolic fits requested by a [`FitConfig`].
#[derive(Debug, Clone)]
pub struct HyperbolicFits {
    /// Present for `reciprocal_ols` and `reciprocal_then_nls`.
    pub reciprocal: Option<FitResult>,
    /// Present for `nls` and `reciprocal_then_nls`.
    pub refined: Option<FitResult>,
}

impl HyperbolicFits {
    /// The last stage of the pipeline.
    pub fn best(&self) -> &FitResult {
        self.refined
            .as_ref()
            .or(self.reciprocal.as_ref())
            .expect("at least one stage runs")
    }

    pub fn into_vec(self) -> Vec<FitResult> {
        self.reciprocal.into_iter().chain(self.refined).collect()
    }
}

/// Runs the hyperbolic pipeline selected by `config.method`. The NLS stage is
/// always initialized from the reciprocal OLS fit.
pub fn fit_hyperbolic(ts: &TimeSeries, config: &FitConfig) -> Result<HyperbolicFits> {
    config.check()?;
    let recip = fit_reciprocal_polynomial_with(ts, config)?;
    let init = recip.hyperbolic().expect("hyperbolic").clone();
    let refined = match config.method {
        FitMethod::ReciprocalOls => None,
        FitMethod::Nls | FitMethod::ReciprocalThenNls => Some(refine_nls(ts, &init, config)?),
    };
    let reciprocal = match config.method {
        FitMethod::Nls => None,
        _ => Some(recip),
    };
    Ok(HyperbolicFits { reciprocal, refined })
}

/// Slice-level version of [`fit_hyperbolic`] returning only the final model.
pub(crate) fn fit_hyperbolic_slices(
    times: &[f64],
    values: &[f64],
    config: &FitConfig,
) -> Result<HyperbolicModel> {
    let init = reciprocal_ols(times, values, config.order, config.time_rescale)?;
    match config.method {
        FitMethod::ReciprocalOls => Ok(init),
        FitMethod::Nls | FitMethod::ReciprocalThenNls => {
            Ok(nls::levenberg_marquardt(times, values, &init, config)?.model)
        }
    }
}

/// Log-linear OLS on raw slices.
pub(crate) fn exponential_ols(times: &[f64], values: &[f64]) -> Result<ExponentialModel> {
    let s = time_scale(times, TimeRescale::Auto);
    let u: Vec<f64> = times.iter().map(|t| t / s).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let line = line_fit(&u, &y).ok_or(Error::RankDeficient)?;
    Ok(ExponentialModel {
        amplitude: line.intercept.exp(),
        rate: -line.slope / s,
    })
}

/// OLS of `ln value` on `{1, t}`, giving `ln C` and `-r`.
pub fn fit_exponential(ts: &TimeSeries) -> Result<FitResult> {
    if ts.len() < 3 {
        return Err(Error::Underdetermined {
            needed: 3,
            got: ts.len(),
        });
    }
    let (times, values) = (ts.times(), ts.values());
    let model = exponential_ols(&times, &values)?;
    FitResult::new(model.into(), "log_ols", &times, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ROCK_SHELTER_COEFFICIENTS;
    use proptest::prelude::*;

    pub(crate) fn sample(model: &GrowthModel, times: &[f64]) -> TimeSeries {
        let values: Vec<f64> = times.iter().map(|&t| model.eval(t).unwrap()).collect();
        TimeSeries::from_pairs(times, &values, "sample").unwrap()
    }

    fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
        let n = ((stop - start) / step).round() as usize;
        (0..=n).map(|i| start + step * i as f64).collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn recovers_rock_shelter_coefficients() {
        let truth = GrowthModel::from(HyperbolicModel::rock_shelter());
        let ts = sample(&truth, &grid(0.0, 10_000.0, 50.0));
        let fit = fit_reciprocal_polynomial(&ts, 2).unwrap();
        let h = fit.hyperbolic().unwrap();
        for (got, want) in h.coefficients.iter().zip(ROCK_SHELTER_COEFFICIENTS) {
            assert!(rel(*got, want) < 1e-8, "{got} vs {want}");
        }
        assert_eq!(h.domain, Domain { t_min: 0.0, t_max: 10_000.0 });
        assert_eq!(fit.p, 3);
        assert_eq!(fit.n, 201);
    }

    #[test]
    fn constant_series_order_one() {
        let ts = TimeSeries::from_pairs(&[0.0, 10.0, 20.0, 35.0], &[4.0; 4], "c").unwrap();
        let fit = fit_reciprocal_polynomial(&ts, 1).unwrap();
        let h = fit.hyperbolic().unwrap();
        assert!((h.coefficients[0] - 0.25).abs() < 1e-10);
        assert!(h.coefficients[1].abs() < 1e-10);
    }

    #[test]
    fn order_one_exact_recovery() {
        let truth = GrowthModel::from(
            HyperbolicModel::new(vec![0.001, 1e-7], Domain::new(0.0, 9800.0).unwrap()).unwrap(),
        );
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 200.0).collect();
        let fit = fit_reciprocal_polynomial(&sample(&truth, &times), 1).unwrap();
        let h = fit.hyperbolic().unwrap();
        assert!(rel(h.coefficients[0], 0.001) < 1e-10);
        assert!(rel(h.coefficients[1], 1e-7) < 1e-10);
        assert!(fit.rss_reciprocal <= 1e-20, "{}", fit.rss_reciprocal);
    }

    #[test]
    fn reciprocal_fit_errors() {
        let ts = TimeSeries::from_pairs(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], "x").unwrap();
        assert!(matches!(
            fit_reciprocal_polynomial(&ts, 2),
            Err(Error::Underdetermined { needed: 4, got: 3 })
        ));
        assert!(matches!(fit_reciprocal_polynomial(&ts, 4), Err(Error::Validation(_))));
        // 1/value falls linearly from 1 to 0.0 and the fitted line crosses zero
        let ts = TimeSeries::from_pairs(
            &[0.0, 1.0, 2.0, 3.0],
            &[1.0, 2.0, 1e6, 1e9],
            "x",
        )
        .unwrap();
        assert!(matches!(
            fit_reciprocal_polynomial(&ts, 1),
            Err(Error::Positivity { .. })
        ));
    }

    #[test]
    fn exponential_recovery() {
        let truth = GrowthModel::from(ExponentialModel { amplitude: 100.0, rate: 1e-4 });
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 500.0).collect();
        let fit = fit_exponential(&sample(&truth, &times)).unwrap();
        let GrowthModel::Exponential(e) = fit.model else { panic!() };
        assert!(rel(e.amplitude, 100.0) < 1e-10);
        assert!(rel(e.rate, 1e-4) < 1e-10);
        assert_eq!(fit.p, 2);
    }

    #[test]
    fn exponential_constant_and_underdetermined() {
        let ts = TimeSeries::from_pairs(&[0.0, 5.0, 9.0], &[7.0; 3], "c").unwrap();
        let GrowthModel::Exponential(e) = fit_exponential(&ts).unwrap().model else { panic!() };
        assert!((e.amplitude - 7.0).abs() < 1e-12);
        assert!(e.rate.abs() < 1e-15);
        let two = TimeSeries::from_pairs(&[0.0, 5.0], &[7.0, 8.0], "c").unwrap();
        assert!(matches!(fit_exponential(&two), Err(Error::Underdetermined { .. })));
    }

    #[test]
    fn pipeline_reports_requested_stages() {
        let truth = GrowthModel::from(HyperbolicModel::rock_shelter());
        let ts = sample(&truth, &grid(0.0, 10_000.0, 500.0));
        let both = fit_hyperbolic(&ts, &FitConfig::default()).unwrap();
        assert!(both.reciprocal.is_some() && both.refined.is_some());
        assert_eq!(both.best().method, "nls");
        let recip = fit_hyperbolic(&ts, &FitConfig::default().with_method(FitMethod::ReciprocalOls)).unwrap();
        assert!(recip.refined.is_none());
        let nls = fit_hyperbolic(&ts, &FitConfig::default().with_method(FitMethod::Nls)).unwrap();
        assert!(nls.reciprocal.is_none());
        assert_eq!(nls.into_vec().len(), 1);
    }

    fn arb_model() -> impl Strategy<Value = (HyperbolicModel, usize)> {
        (1usize..=3).prop_flat_map(|k| {
            (prop::collection::vec(1e-3f64..1e-2, k + 1), 2 * k + 4..60usize).prop_map(move |(b, n)| {
                let c = b.iter().enumerate().map(|(i, x)| x / 1e4f64.powi(i as i32)).collect();
                (HyperbolicModel::new(c, Domain::new(0.0, 10_000.0).unwrap()).unwrap(), n)
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_recovers_coefficients((m, n) in arb_model()) {
            let times: Vec<f64> = (0..n).map(|i| 10_000.0 * i as f64 / (n - 1) as f64).collect();
            let ts = sample(&m.clone().into(), &times);
            let fit = fit_reciprocal_polynomial(&ts, m.order).unwrap();
            for (got, want) in fit.hyperbolic().unwrap().coefficients.iter().zip(&m.coefficients) {
                prop_assert!(rel(*got, *want) < 1e-8, "{} vs {}", got, want);
            }
        }

        #[test]
        fn internal_rescaling_matches_manual_rescaling(
            (m, n) in arb_model(),
            noise in prop::collection::vec(-0.05f64..0.05, 60),
        ) {
            let times: Vec<f64> = (0..n).map(|i| 10_000.0 * i as f64 / (n - 1) as f64).collect();
            let values: Vec<f64> = times.iter().zip(&noise)
                .map(|(&t, e)| m.eval(t).unwrap() * (1.0 + e)).collect();
            let ts = TimeSeries::from_pairs(&times, &values, "x").unwrap();
            let auto = fit_reciprocal_polynomial(&ts, m.order);
            let s = 10_000.0;
            let pre: Vec<f64> = times.iter().map(|t| t / s).collect();
            let pre_ts = TimeSeries::from_pairs(&pre, &values, "x").unwrap();
            let cfg = FitConfig { time_rescale: TimeRescale::Off, ..FitConfig::with_order(m.order) };
            let manual = fit_reciprocal_polynomial_with(&pre_ts, &cfg);
            match (auto, manual) {
                (Ok(a), Ok(b)) => {
                    let bc = &b.hyperbolic().unwrap().coefficients;
                    for (i, (x, y)) in a.hyperbolic().unwrap().coefficients.iter().zip(bc).enumerate() {
                        let y = y / s.powi(i as i32);
                        let scale = a.hyperbolic().unwrap().coefficients[0].abs();
                        // compare on the scale of the dominant term at t = max|t|
                        prop_assert!((x - y).abs() * s.powi(i as i32) <= 1e-6 * scale.max(x.abs() * s.powi(i as i32)));
                    }
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "outcomes differ: {:?} / {:?}", a.is_ok(), b.is_ok()),
            }
        }
    }
}
