//! Two-regime exponential fit with a breakpoint at an observed time.

use super::{exponential_ols, FitResult};
use crate::error::{Error, Result};
use crate::models::{ExponentialModel, PiecewiseExponentialModel};
use crate::timeseries::TimeSeries;

pub const DEFAULT_MIN_SEGMENT: usize = 3;

/// Grid search over breakpoints at observed times.
///
/// A candidate `t_b` must leave at least `min_segment` points with `t < t_b`
/// (late segment) and at least `min_segment` with `t >= t_b` (early segment).
/// Each segment is fitted by log-linear OLS; if the single global
/// exponential has a smaller raw RSS on a segment, that segment takes the
/// global parameters instead, so the piecewise RSS never exceeds the single
/// fit's. The breakpoint minimizing total raw RSS wins, ties going to the
/// smaller `t_b`.
pub fn fit_piecewise_exponential(ts: &TimeSeries, min_segment: usize) -> Result<FitResult> {
    if min_segment < 2 {
        return Err(Error::Validation("min_segment must be >= 2".into()));
    }
    let n = ts.len();
    if n < 2 * min_segment {
        return Err(Error::Underdetermined {
            needed: 2 * min_segment,
            got: n,
        });
    }
    let (times, values) = (ts.times(), ts.values());
    let global = exponential_ols(&times, &values)?;

    let mut best: Option<(f64, PiecewiseExponentialModel)> = None;
    for split in min_segment..=n - min_segment {
        let (late, late_rss) = segment_fit(&times[..split], &values[..split], &global)?;
        let (early, early_rss) = segment_fit(&times[split..], &values[split..], &global)?;
        let total = late_rss + early_rss;
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((
                total,
                PiecewiseExponentialModel {
                    breakpoint: times[split],
                    early,
                    late,
                },
            ));
        }
    }
    let (_, model) = best.expect("at least one candidate breakpoint");
    FitResult::new(model.into(), "piecewise_log_ols", &times, &values)
}

fn segment_fit(
    times: &[f64],
    values: &[f64],
    global: &ExponentialModel,
) -> Result<(ExponentialModel, f64)> {
    let own = exponential_ols(times, values)?;
    let own_rss = raw_rss(&own, times, values);
    let global_rss = raw_rss(global, times, values);
    Ok(if global_rss < own_rss {
        (*global, global_rss)
    } else {
        (own, own_rss)
    })
}

fn raw_rss(m: &ExponentialModel, times: &[f64], values: &[f64]) -> f64 {
    times
        .iter()
        .zip(values)
        .map(|(&t, &v)| (v - m.eval(t)).powi(2))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::fit_exponential;
    use crate::models::GrowthModel;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn two_rate_series() -> TimeSeries {
        // late regime starts 20% above where the early one ends
        let early = ExponentialModel { amplitude: 50.0, rate: 1e-5 };
        let level = 1.2 * early.eval(5000.0);
        let late = ExponentialModel { amplitude: level * (3e-4f64 * 5000.0).exp(), rate: 3e-4 };
        let truth = PiecewiseExponentialModel { breakpoint: 5000.0, early, late };
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 200.0).collect();
        let values: Vec<f64> = times.iter().map(|&t| truth.segment(t).eval(t)).collect();
        TimeSeries::from_pairs(&times, &values, "two-rate").unwrap()
    }

    #[test]
    fn recovers_true_breakpoint_and_rates() {
        let ts = two_rate_series();
        assert_eq!(ts.points().iter().filter(|p| p.t_bp < 5000.0).count(), 25);
        let fit = fit_piecewise_exponential(&ts, 3).unwrap();
        let GrowthModel::PiecewiseExponential(p) = fit.model else { panic!() };
        assert_eq!(p.breakpoint, 5000.0);
        assert!(rel(p.early.rate, 1e-5) < 1e-8, "{}", p.early.rate);
        assert!(rel(p.late.rate, 3e-4) < 1e-8, "{}", p.late.rate);
        assert_eq!(fit.p, 5);
    }

    #[test]
    fn single_exponential_is_nested() {
        let m = ExponentialModel { amplitude: 100.0, rate: 2e-4 };
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 250.0).collect();
        let values: Vec<f64> = times.iter().map(|&t| m.eval(t)).collect();
        let ts = TimeSeries::from_pairs(&times, &values, "exp").unwrap();
        let single = fit_exponential(&ts).unwrap();
        let pw = fit_piecewise_exponential(&ts, 3).unwrap();
        let GrowthModel::PiecewiseExponential(p) = pw.model else { panic!() };
        assert!(rel(p.early.rate, 2e-4) < 1e-8);
        assert!(rel(p.late.rate, 2e-4) < 1e-8);
        assert!((single.rss_raw - pw.rss_raw).abs() <= 1e-18);
    }

    #[test]
    fn too_few_points() {
        let ts = TimeSeries::from_pairs(&[0.0, 1.0, 2.0, 3.0, 4.0], &[5.0, 4.0, 3.0, 2.0, 1.0], "x").unwrap();
        assert!(matches!(
            fit_piecewise_exponential(&ts, 3),
            Err(Error::Underdetermined { needed: 6, got: 5 })
        ));
        assert!(fit_piecewise_exponential(&ts, 2).is_ok());
    }

    #[test]
    fn ties_go_to_smaller_breakpoint() {
        // identical values: every candidate fits perfectly
        let ts = TimeSeries::from_pairs(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2.0; 7], "c").unwrap();
        let GrowthModel::PiecewiseExponential(p) = fit_piecewise_exponential(&ts, 2).unwrap().model else {
            panic!()
        };
        assert_eq!(p.breakpoint, 2.0);
    }

    proptest! {
        #[test]
        fn piecewise_never_worse_than_single(
            values in prop::collection::vec(0.1f64..1000.0, 6..40),
            spacing in 1.0f64..500.0,
        ) {
            let times: Vec<f64> = (0..values.len()).map(|i| i as f64 * spacing).collect();
            let ts = TimeSeries::from_pairs(&times, &values, "r").unwrap();
            let single = fit_exponential(&ts).unwrap();
            let pw = fit_piecewise_exponential(&ts, 3).unwrap();
            prop_assert!(pw.rss_raw <= single.rss_raw * (1.0 + 1e-12));
        }
    }
}
