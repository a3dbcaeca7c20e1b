//! Turning-point diagnostics: monotonicity along the arrow of time, a
//! two-segment break scan on the reciprocal series, and BIC competition
//! between single-trend and piecewise models.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::fitting::{
    fit_exponential, fit_hyperbolic, fit_piecewise_exponential, line_fit, FitConfig, LineFit, FitResult,
    DEFAULT_MIN_SEGMENT,
};
use crate::models::GrowthModel;
use crate::timeseries::{TimeSeries, Transform};

/// RSS values below `n * (RSS_RESOLUTION * rms)^2` are indistinguishable from
/// a perfect fit in double precision and are clamped to that floor before
/// taking logarithms.
pub const RSS_RESOLUTION: f64 = 1e-10;

/// Relative tolerance for the downward flag of the break scan.
const DOWNWARD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Successive steps with a change in value; exact ties are excluded.
    pub n_steps: usize,
    pub n_increasing: usize,
    pub n_ties: usize,
    /// Fraction of steps where the value rises toward the present. Absent
    /// when every step is a tie.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub increasing_fraction: Option<f64>,
    /// Two-sided binomial sign test against a fraction of 0.5.
    pub sign_test_p: f64,
}

/// Walks the series along the arrow of time (descending `t_bp`) and counts
/// steps where the later value exceeds the earlier one.
pub fn monotonicity_report(ts: &TimeSeries) -> Result<MonotonicityReport> {
    if ts.len() < 2 {
        return Err(Error::Underdetermined {
            needed: 2,
            got: ts.len(),
        });
    }
    let pts = ts.points();
    let (mut up, mut down, mut ties) = (0usize, 0usize, 0usize);
    for w in pts.windows(2) {
        // w[0] is later in time (smaller t_bp)
        let (later, earlier) = (w[0].value, w[1].value);
        if later > earlier {
            up += 1;
        } else if later < earlier {
            down += 1;
        } else {
            ties += 1;
        }
    }
    let n_steps = up + down;
    let (fraction, p) = if n_steps == 0 {
        (None, 1.0)
    } else {
        (Some(up as f64 / n_steps as f64), sign_test(up, n_steps))
    };
    Ok(MonotonicityReport {
        n_steps,
        n_increasing: up,
        n_ties: ties,
        increasing_fraction: fraction,
        sign_test_p: p,
    })
}

fn sign_test(k: usize, n: usize) -> f64 {
    let dist = Binomial::new(0.5, n as u64).expect("valid binomial");
    let lower = dist.cdf(k as u64);
    let upper = if k == 0 { 1.0 } else { dist.sf(k as u64 - 1) };
    (2.0 * lower.min(upper)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakScanReport {
    pub best_breakpoint: f64,
    /// RSS of the single affine trend minus RSS of the two-segment fit.
    pub delta_rss: f64,
    /// BIC(single) - BIC(two segments); positive favors a break.
    pub delta_bic: f64,
    /// True when the late segment lies below the early segment's
    /// extrapolation at the late segment's midpoint: the reciprocal series
    /// bends down toward the present, i.e. growth accelerated.
    pub downward: bool,
    pub rss_single: f64,
    pub rss_two_segment: f64,
    /// Slopes of `1/N` per year.
    pub late_slope: f64,
    pub early_slope: f64,
}

fn rss_floor(n: usize, values: &[f64]) -> f64 {
    let ms = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    n as f64 * RSS_RESOLUTION * RSS_RESOLUTION * ms
}

fn log_likelihood_term(n: usize, rss: f64, floor: f64) -> f64 {
    let nf = n as f64;
    nf * (rss.max(floor) / nf).ln()
}

/// Affine trend versus two independent affine segments on `1/value`.
/// Breakpoint candidates are the observed times that leave at least
/// `min_segment` points on each side (late: `t < t_b`, early: `t >= t_b`).
pub fn reciprocal_break_scan(ts: &TimeSeries, min_segment: usize) -> Result<BreakScanReport> {
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
    let recip = ts.transform(Transform::Reciprocal)?;
    let times = recip.times();
    let y = recip.values();
    let s = times.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(f64::MIN_POSITIVE);
    let u: Vec<f64> = times.iter().map(|t| t / s).collect();

    let single = line_fit(&u, &y).ok_or(Error::RankDeficient)?;
    let mut best: Option<(f64, usize, LineFit, LineFit)> = None;
    for split in min_segment..=n - min_segment {
        let late = line_fit(&u[..split], &y[..split]).ok_or(Error::RankDeficient)?;
        let early = line_fit(&u[split..], &y[split..]).ok_or(Error::RankDeficient)?;
        let total = late.rss + early.rss;
        if best.as_ref().is_none_or(|&(b, ..)| total < b) {
            best = Some((total, split, late, early));
        }
    }
    let (rss_two, split, late, early) = best.expect("at least one candidate");

    let floor = rss_floor(n, &y);
    let bic_single = log_likelihood_term(n, single.rss, floor) + 2.0 * (n as f64).ln();
    let bic_two = log_likelihood_term(n, rss_two, floor) + 5.0 * (n as f64).ln();

    let mid = 0.5 * (u[0] + u[split - 1]);
    let scale = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let downward = late.at(mid) < early.at(mid) - DOWNWARD_TOLERANCE * scale;

    Ok(BreakScanReport {
        best_breakpoint: times[split],
        delta_rss: (single.rss - rss_two).max(0.0),
        delta_bic: bic_single - bic_two,
        downward,
        rss_single: single.rss,
        rss_two_segment: rss_two,
        late_slope: late.slope / s,
        early_slope: early.slope / s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    /// e.g. `hyperbolic_k2`, `exponential`, `piecewise_exponential`.
    pub label: String,
    pub kind: String,
    pub rss_raw: f64,
    pub p: usize,
    pub aic: f64,
    pub bic: f64,
    /// RSS was below the numerical resolution floor and was clamped to it.
    pub perfect_fit: bool,
}

impl ModelEntry {
    pub fn is_single_trend(&self) -> bool {
        self.kind != "piecewise_exponential"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub n: usize,
    pub entries: Vec<ModelEntry>,
    /// Index into `entries` of the minimal-BIC model.
    pub preferred: usize,
    pub preferred_label: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl ModelComparison {
    pub fn preferred_entry(&self) -> &ModelEntry {
        &self.entries[self.preferred]
    }

    pub fn entry(&self, label: &str) -> Option<&ModelEntry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

/// AIC and BIC on the raw scale, `n ln(rss/n) + penalty`. The preferred
/// model has minimal BIC; exact ties go to the smaller parameter count.
pub fn compare_models(ts: &TimeSeries, fits: &[FitResult]) -> Result<ModelComparison> {
    if fits.len() < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 fits to compare, got {}",
            fits.len()
        )));
    }
    let n = ts.len();
    if let Some(f) = fits.iter().find(|f| f.n != n) {
        return Err(Error::Precondition(format!(
            "fit {} was computed on {} points, series has {n}",
            f.model.label(),
            f.n
        )));
    }
    let floor = rss_floor(n, &ts.values());
    let ln_n = (n as f64).ln();
    let mut warnings = Vec::new();
    let entries: Vec<ModelEntry> = fits
        .iter()
        .map(|f| {
            let perfect = f.rss_raw <= floor;
            if perfect {
                warnings.push(format!(
                    "{}: residual sum of squares at numerical resolution; clamped to {floor:e}",
                    f.model.label()
                ));
            }
            let ll = log_likelihood_term(n, f.rss_raw, floor);
            ModelEntry {
                label: f.model.label(),
                kind: f.model.kind().to_string(),
                rss_raw: f.rss_raw,
                p: f.p,
                aic: ll + 2.0 * f.p as f64,
                bic: ll + f.p as f64 * ln_n,
                perfect_fit: perfect,
            }
        })
        .collect();
    let preferred = argmin_bic(entries.iter().enumerate()).expect("non-empty");
    Ok(ModelComparison {
        n,
        preferred_label: entries[preferred].label.clone(),
        entries,
        preferred,
        warnings,
    })
}

fn argmin_bic<'a>(it: impl Iterator<Item = (usize, &'a ModelEntry)>) -> Option<usize> {
    it.fold(None, |best: Option<(usize, &ModelEntry)>, (i, e)| match best {
        Some((_, b)) if (b.bic, b.p) <= (e.bic, e.p) => best,
        _ => Some((i, e)),
    })
    .map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub bic_margin: f64,
    pub downward_required: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            bic_margin: 10.0,
            downward_required: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictValue {
    NoTurningPoint,
    TurningPoint,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    pub rationale: String,
    pub thresholds: Thresholds,
    /// Best single-trend model by BIC.
    pub best_single_trend: String,
    /// BIC(best single trend) - BIC(piecewise); positive favors a turning point.
    pub piecewise_bic_advantage: f64,
}

/// BIC-margin decision rule.
///
/// `TurningPoint` when the piecewise model beats every single-trend model by
/// more than `bic_margin` and, if required, the reciprocal scan bends
/// downward. `NoTurningPoint` when some single-trend model beats the
/// piecewise model by more than `bic_margin`. Otherwise `Inconclusive`.
pub fn turning_point_verdict(
    cmp: &ModelComparison,
    scan: &BreakScanReport,
    mono: &MonotonicityReport,
    thresholds: Thresholds,
) -> Result<Verdict> {
    let best_single = argmin_bic(
        cmp.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_single_trend()),
    )
    .map(|i| &cmp.entries[i])
    .ok_or_else(|| Error::Precondition("comparison has no single-trend model".into()))?;
    let piecewise = cmp
        .entries
        .iter()
        .find(|e| !e.is_single_trend())
        .ok_or_else(|| Error::Precondition("comparison has no piecewise model".into()))?;

    let advantage = best_single.bic - piecewise.bic;
    let margin = thresholds.bic_margin;
    let break_wins = advantage > margin;
    let value = if break_wins && (!thresholds.downward_required || scan.downward) {
        VerdictValue::TurningPoint
    } else if -advantage > margin {
        VerdictValue::NoTurningPoint
    } else {
        VerdictValue::Inconclusive
    };

    let mut rationale = format!(
        "BIC-margin rule (margin {margin}): best single-trend model {} has BIC {:.3}, \
         piecewise_exponential has BIC {:.3} (advantage to piecewise {:.3}). ",
        best_single.label, best_single.bic, piecewise.bic, advantage
    );
    rationale.push_str(&match value {
        VerdictValue::TurningPoint => format!(
            "The two-phase model wins by more than the margin and the reciprocal series bends \
             downward at t = {} BP.",
            scan.best_breakpoint
        ),
        VerdictValue::NoTurningPoint => format!(
            "{} beats the two-phase model by more than the margin.",
            best_single.label
        ),
        VerdictValue::Inconclusive if break_wins => format!(
            "The two-phase model wins on BIC but the reciprocal series shows no downward \
             change (best break t = {} BP), so the win is read as curvature misfit.",
            scan.best_breakpoint
        ),
        VerdictValue::Inconclusive => "No model class wins by more than the margin.".to_string(),
    });
    if let Some(f) = mono.increasing_fraction {
        rationale.push_str(&format!(
            " Monotonicity: {:.3} of {} steps rise toward the present (sign test p = {:.3e}).",
            f, mono.n_steps, mono.sign_test_p
        ));
    }

    Ok(Verdict {
        value,
        rationale,
        thresholds,
        best_single_trend: best_single.label.clone(),
        piecewise_bic_advantage: advantage,
    })
}

/// Settings for the full diagnostic battery.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    /// Hyperbolic orders in the single-trend menu.
    pub orders: Vec<usize>,
    pub fit: FitConfig,
    pub min_segment: usize,
    pub thresholds: Thresholds,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            orders: vec![1, 2],
            fit: FitConfig::default(),
            min_segment: DEFAULT_MIN_SEGMENT,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub monotonicity: MonotonicityReport,
    pub break_scan: BreakScanReport,
    pub comparison: ModelComparison,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct Diagnosis {
    /// Every fit produced, including reciprocal-OLS initializers.
    pub fits: Vec<FitResult>,
    /// Fits that entered the comparison, in menu order.
    pub menu: Vec<FitResult>,
    pub diagnostics: Diagnostics,
    /// Hyperbolic orders that could not be fitted, with the reason.
    pub skipped: Vec<String>,
}

/// Fits the full menu (hyperbolic orders, exponential, piecewise exponential)
/// and runs every check.
pub fn diagnose(ts: &TimeSeries, opts: &DiagnoseOptions) -> Result<Diagnosis> {
    let mut fits = Vec::new();
    let mut menu = Vec::new();
    let mut skipped = Vec::new();
    for &order in &opts.orders {
        let cfg = FitConfig { order, ..opts.fit };
        match fit_hyperbolic(ts, &cfg) {
            Ok(h) => {
                menu.push(h.best().clone());
                fits.extend(h.into_vec());
            }
            Err(e) => skipped.push(format!("hyperbolic_k{order}: {e}")),
        }
    }
    let exponential = fit_exponential(ts)?;
    let piecewise = fit_piecewise_exponential(ts, opts.min_segment)?;
    for f in [exponential, piecewise] {
        fits.push(f.clone());
        menu.push(f);
    }

    let monotonicity = monotonicity_report(ts)?;
    let break_scan = reciprocal_break_scan(ts, opts.min_segment)?;
    let mut comparison = compare_models(ts, &menu)?;
    comparison.warnings.extend(skipped.iter().cloned());
    let verdict = turning_point_verdict(&comparison, &break_scan, &monotonicity, opts.thresholds)?;
    Ok(Diagnosis {
        fits,
        menu,
        diagnostics: Diagnostics {
            monotonicity,
            break_scan,
            comparison,
            verdict,
        },
        skipped,
    })
}

/// Naive two-model menu {exponential, piecewise exponential}: true when the
/// piecewise model is preferred by more than `bic_margin`.
pub fn naive_menu_prefers_piecewise(
    ts: &TimeSeries,
    min_segment: usize,
    bic_margin: f64,
) -> Result<(bool, ModelComparison)> {
    let fits = [fit_exponential(ts)?, fit_piecewise_exponential(ts, min_segment)?];
    let cmp = compare_models(ts, &fits)?;
    let single = cmp.entry("exponential").expect("present").bic;
    let pw = cmp.entry("piecewise_exponential").expect("present").bic;
    Ok((single - pw > bic_margin, cmp))
}

/// Breakpoint of the piecewise fit in a menu, if any.
pub fn piecewise_breakpoint(menu: &[FitResult]) -> Option<f64> {
    menu.iter().find_map(|f| match &f.model {
        GrowthModel::PiecewiseExponential(p) => Some(p.breakpoint),
        _ => None,
    })
}
