//! Synthetic series and the Monte Carlo "illusion" experiment: how often does
//! a two-phase model look better on data that has no turning point?

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose, naive_menu_prefers_piecewise, piecewise_breakpoint};
use crate::diagnostics::{DiagnoseOptions, VerdictValue};
use crate::error::{Error, Result};
use crate::models::GrowthModel;
use crate::seeding::derive_seed;
use crate::timeseries::TimeSeries;

const MAX_GAUSSIAN_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    MultiplicativeLognormal,
    AdditiveGaussian,
}

/// `sigma` is the log-scale standard deviation for lognormal noise and the
/// absolute standard deviation for Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        kind: NoiseKind::None,
        sigma: 0.0,
    };

    pub fn lognormal(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::MultiplicativeLognormal,
            sigma,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::AdditiveGaussian,
            sigma,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.kind != NoiseKind::None && !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Parses `none`, `lognormal:SIGMA` or `gaussian:SIGMA`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "none" {
            return Ok(Self::NONE);
        }
        let (kind, sigma) = text.split_once(':').ok_or_else(|| {
            Error::Validation(format!("noise must be none, lognormal:S or gaussian:S, got {text:?}"))
        })?;
        let sigma: f64 = sigma
            .parse()
            .map_err(|_| Error::Validation(format!("bad noise sigma {sigma:?}")))?;
        let spec = match kind {
            "lognormal" => Self::lognormal(sigma),
            "gaussian" => Self::gaussian(sigma),
            other => return Err(Error::Validation(format!("unknown noise kind {other:?}"))),
        };
        spec.check()?;
        Ok(spec)
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::lognormal(0.05)
    }
}

/// Evaluates `m` on `grid` and applies seeded noise.
///
/// Lognormal: `N(t) * exp(sigma * z)`. Gaussian: `N(t) + sigma * z`, with
/// non-positive draws redrawn up to 100 times.
pub fn sample_series(
    m: &GrowthModel,
    grid: &[f64],
    noise: NoiseSpec,
    seed: u64,
) -> Result<TimeSeries> {
    noise.check()?;
    if grid.is_empty() {
        return Err(Error::Validation("empty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation("grid must be strictly ascending".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid {
        let base = m.eval(t)?;
        let v = match noise.kind {
            NoiseKind::None => base,
            NoiseKind::MultiplicativeLognormal => {
                let z: f64 = StandardNormal.sample(&mut rng);
                base * (noise.sigma * z).exp()
            }
            NoiseKind::AdditiveGaussian => positive_gaussian(base, noise.sigma, &mut rng)
                .ok_or(Error::RedrawExhausted { t })?,
        };
        values.push(v);
    }
    TimeSeries::from_pairs(grid, &values, "synthetic")
}

fn positive_gaussian(base: f64, sigma: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    (0..MAX_GAUSSIAN_REDRAWS).find_map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        let v = base + sigma * z;
        (v > 0.0).then_some(v)
    })
}

/// Inclusive arithmetic grid `start, start + step, ...` up to `stop`.
pub fn arithmetic_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
        return Err(Error::Validation(format!(
            "grid needs start <= stop and step > 0, got {start}:{stop}:{step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub naive_prefers_piecewise: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<VerdictValue>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub preferred: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub piecewise_breakpoint: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub piecewise_bic_advantage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub points: usize,
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllusionExperimentReport {
    pub n_trials: usize,
    pub truth: GrowthModel,
    pub truth_description: String,
    pub grid: GridSummary,
    pub noise: NoiseSpec,
    pub master_seed: u64,
    pub bic_margin: f64,
    pub downward_required: bool,
    pub min_segment: usize,
    pub completed: usize,
    pub failed: usize,
    /// Fraction of completed trials where {exponential, piecewise} prefers
    /// the piecewise model by more than the BIC margin.
    pub naive_menu_spurious_rate: f64,
    pub full_menu_turning_point_rate: f64,
    pub full_menu_no_turning_point_rate: f64,
    pub full_menu_inconclusive_rate: f64,
    pub trials: Vec<TrialRecord>,
}

impl IllusionExperimentReport {
    /// One row per trial.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from(
            "index,seed,failed,naive_prefers_piecewise,verdict,preferred,piecewise_breakpoint,piecewise_bic_advantage\n",
        );
        for t in &self.trials {
            let opt = |v: Option<String>| v.unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                t.index,
                t.seed,
                t.failed,
                opt(t.naive_prefers_piecewise.map(|b| b.to_string())),
                opt(t.verdict.map(|v| format!("{v:?}"))),
                opt(t.preferred.clone()),
                opt(t.piecewise_breakpoint.map(|b| b.to_string())),
                opt(t.piecewise_bic_advantage.map(|b| b.to_string())),
            );
        }
        out
    }
}

fn run_trial(
    index: usize,
    truth: &GrowthModel,
    grid: &[f64],
    noise: NoiseSpec,
    master_seed: u64,
    opts: &DiagnoseOptions,
) -> TrialRecord {
    let seed = derive_seed(master_seed, index as u64);
    let outcome = (|| -> Result<TrialRecord> {
        let ts = sample_series(truth, grid, noise, seed)?;
        let (naive, _) =
            naive_menu_prefers_piecewise(&ts, opts.min_segment, opts.thresholds.bic_margin)?;
        let d = diagnose(&ts, opts)?;
        Ok(TrialRecord {
            index,
            seed,
            failed: false,
            error: None,
            naive_prefers_piecewise: Some(naive),
            verdict: Some(d.diagnostics.verdict.value),
            preferred: Some(d.diagnostics.comparison.preferred_label.clone()),
            piecewise_breakpoint: piecewise_breakpoint(&d.menu),
            piecewise_bic_advantage: Some(d.diagnostics.verdict.piecewise_bic_advantage),
        })
    })();
    outcome.unwrap_or_else(|e| TrialRecord {
        index,
        seed,
        failed: true,
        error: Some(e.to_string()),
        naive_prefers_piecewise: None,
        verdict: None,
        preferred: None,
        piecewise_breakpoint: None,
        piecewise_bic_advantage: None,
    })
}

/// Runs `n_trials` independent trials. Trial `i` samples with seed
/// `derive_seed(master_seed, i)`, so the first `k` trials of a longer run
/// match a run of `k` trials and results do not depend on thread count.
/// Failed trials are recorded and excluded from the rates.
pub fn run_illusion_experiment(
    truth: &GrowthModel,
    grid: &[f64],
    noise: NoiseSpec,
    n_trials: usize,
    master_seed: u64,
    opts: &DiagnoseOptions,
) -> Result<IllusionExperimentReport> {
    if n_trials < 1 {
        return Err(Error::Precondition("n_trials must be >= 1".into()));
    }
    noise.check()?;
    truth.validate()?;
    if grid.is_empty() {
        return Err(Error::Validation("empty grid".into()));
    }
    for &t in grid {
        truth.eval(t)?;
    }

    let trials: Vec<TrialRecord> = (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial(i, truth, grid, noise, master_seed, opts))
        .collect();

    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| !t.failed).collect();
    let completed = ok.len();
    let rate = |pred: &dyn Fn(&TrialRecord) -> bool| {
        if completed == 0 {
            0.0
        } else {
            ok.iter().filter(|t| pred(t)).count() as f64 / completed as f64
        }
    };
    let verdict_rate = |v: VerdictValue| rate(&|t: &TrialRecord| t.verdict == Some(v));

    Ok(IllusionExperimentReport {
        n_trials,
        truth: truth.clone(),
        truth_description: truth.to_string(),
        grid: GridSummary {
            points: grid.len(),
            t_min: grid[0],
            t_max: grid[grid.len() - 1],
        },
        noise,
        master_seed,
        bic_margin: opts.thresholds.bic_margin,
        downward_required: opts.thresholds.downward_required,
        min_segment: opts.min_segment,
        completed,
        failed: n_trials - completed,
        naive_menu_spurious_rate: rate(&|t: &TrialRecord| t.naive_prefers_piecewise == Some(true)),
        full_menu_turning_point_rate: verdict_rate(VerdictValue::TurningPoint),
        full_menu_no_turning_point_rate: verdict_rate(VerdictValue::NoTurningPoint),
        full_menu_inconclusive_rate: verdict_rate(VerdictValue::Inconclusive),
        trials,
    })
}
