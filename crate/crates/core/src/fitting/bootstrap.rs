//! Case-resampling bootstrap for hyperbolic coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{count_distinct, fit_hyperbolic, fit_hyperbolic_slices, FitConfig};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;
use crate::timeseries::TimeSeries;

pub const MIN_RESAMPLES: usize = 100;
const MAX_ATTEMPTS: usize = 10;
const MAX_SKIPPED_FRACTION: f64 = 0.2;

/// Percentile interval for one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ParameterInterval {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// One entry per coefficient, `a0` first.
    pub intervals: Vec<ParameterInterval>,
    pub n_resamples: usize,
    pub skipped: usize,
    pub seed: u64,
}

/// 95% percentile intervals (2.5%, 97.5%) for each hyperbolic coefficient.
///
/// Each resample draws `n` points with replacement. A draw with fewer than
/// `order + 2` distinct times, or whose refit fails, is redrawn up to 10
/// times before the resample is skipped. Resample `i` uses its own generator
/// seeded with `derive_seed(seed, i)`, so the result does not depend on how
/// resamples are scheduled across threads.
pub fn bootstrap_parameters(
    ts: &TimeSeries,
    config: &FitConfig,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::Precondition(format!(
            "n_resamples must be >= {MIN_RESAMPLES}, got {n_resamples}"
        )));
    }
    let point = fit_hyperbolic(ts, config)?;
    let estimate = point.best().hyperbolic().expect("hyperbolic").coefficients.clone();
    let (times, values) = (ts.times(), ts.values());
    let n = times.len();

    let draws: Vec<Option<Vec<f64>>> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let mut rt = vec![0.0; n];
            let mut rv = vec![0.0; n];
            for _ in 0..MAX_ATTEMPTS {
                for j in 0..n {
                    let k = rng.random_range(0..n);
                    rt[j] = times[k];
                    rv[j] = values[k];
                }
                if count_distinct(&rt) < config.order + 2 {
                    continue;
                }
                if let Ok(m) = fit_hyperbolic_slices(&rt, &rv, config) {
                    return Some(m.coefficients);
                }
            }
            None
        })
        .collect();

    let skipped = draws.iter().filter(|d| d.is_none()).count();
    if skipped as f64 > MAX_SKIPPED_FRACTION * n_resamples as f64 {
        return Err(Error::BootstrapUnstable {
            skipped,
            total: n_resamples,
        });
    }
    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let intervals = estimate
        .iter()
        .enumerate()
        .map(|(j, &est)| {
            let mut col: Vec<f64> = ok.iter().map(|c| c[j]).collect();
            col.sort_by(f64::total_cmp);
            ParameterInterval {
                estimate: est,
                lower: quantile(&col, 0.025),
                upper: quantile(&col, 0.975),
            }
        })
        .collect();
    Ok(BootstrapReport {
        intervals,
        n_resamples,
        skipped,
        seed,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GrowthModel, HyperbolicModel};

    fn noiseless() -> TimeSeries {
        let m = GrowthModel::from(HyperbolicModel::rock_shelter());
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 100.0).collect();
        let values: Vec<f64> = times.iter().map(|&t| m.eval(t).unwrap()).collect();
        TimeSeries::from_pairs(&times, &values, "exact").unwrap()
    }

    #[test]
    fn quantile_interpolates() {
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&d, 0.0), 1.0);
        assert_eq!(quantile(&d, 0.5), 3.0);
        assert_eq!(quantile(&d, 0.125), 1.5);
        assert_eq!(quantile(&d, 1.0), 5.0);
    }

    #[test]
    fn noiseless_intervals_collapse() {
        let r = bootstrap_parameters(&noiseless(), &FitConfig::default(), 100, 7).unwrap();
        assert_eq!(r.skipped, 0);
        for iv in &r.intervals {
            assert!(iv.width() <= 1e-6 * iv.estimate.abs(), "{iv:?}");
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let ts = noiseless();
        let cfg = FitConfig::default();
        let a = bootstrap_parameters(&ts, &cfg, 120, 42).unwrap();
        let b = bootstrap_parameters(&ts, &cfg, 120, 42).unwrap();
        for (x, y) in a.intervals.iter().zip(&b.intervals) {
            assert_eq!(x.lower.to_bits(), y.lower.to_bits());
            assert_eq!(x.upper.to_bits(), y.upper.to_bits());
        }
    }

    #[test]
    fn too_few_resamples() {
        assert!(matches!(
            bootstrap_parameters(&noiseless(), &FitConfig::default(), 50, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn unstable_when_most_draws_are_degenerate() {
        // four points, order 2: a draw needs all four distinct times
        let ts = TimeSeries::from_pairs(&[0.0, 1.0, 2.0, 3.0], &[10.0, 8.0, 7.0, 6.5], "tiny").unwrap();
        assert!(matches!(
            bootstrap_parameters(&ts, &FitConfig::default(), 100, 3),
            Err(Error::BootstrapUnstable { .. })
        ));
    }
}
