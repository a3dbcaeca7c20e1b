//! Growth-model family: hyperbolic of order k, exponential, and piecewise
//! exponential.
//!
//! Time is in years BP throughout, so "growth toward the present" means the
//! value rises as `t` falls.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Second-order coefficients `(a0, a1, a2)` describing the Australian
/// rock-shelter site counts over the last 10,000 years, `t` in years BP.
pub const ROCK_SHELTER_COEFFICIENTS: [f64; 3] = [0.0006875, 1.72e-7, 8.7468e-11];

/// Default validity domain for the rock-shelter model.
pub const ROCK_SHELTER_DOMAIN: Domain = Domain {
    t_min: 0.0,
    t_max: 10_000.0,
};

pub const MAX_ORDER: usize = 3;

/// Closed interval `[t_min, t_max]` in years BP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub t_min: f64,
    pub t_max: f64,
}

impl Domain {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite() && t_min <= t_max) {
            return Err(Error::Validation(format!(
                "invalid domain [{t_min}, {t_max}]"
            )));
        }
        Ok(Self { t_min, t_max })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }
}

/// `N(t) = 1 / (a0 + a1 t + ... + ak t^k)` on a declared domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicModel {
    pub order: usize,
    /// `a0` first.
    pub coefficients: Vec<f64>,
    pub domain: Domain,
}

/// `N(t) = C exp(-r t)`; `r > 0` is growth toward the present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialModel {
    pub amplitude: f64,
    pub rate: f64,
}

/// Two independent exponential regimes split at `breakpoint`: `early` for
/// `t >= breakpoint`, `late` for `t < breakpoint`. Levels need not match at
/// the breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseExponentialModel {
    pub breakpoint: f64,
    pub early: ExponentialModel,
    pub late: ExponentialModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthModel {
    Hyperbolic(HyperbolicModel),
    Exponential(ExponentialModel),
    PiecewiseExponential(PiecewiseExponentialModel),
}

/// Outcome of [`validate_model_domain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainCheck {
    Valid,
    /// Smallest `t` in the domain where the denominator is `<= 0`.
    Invalid(f64),
}

impl DomainCheck {
    pub fn is_valid(self) -> bool {
        matches!(self, DomainCheck::Valid)
    }
}

fn horner(coefficients: &[f64], t: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

fn derivative(coefficients: &[f64]) -> Vec<f64> {
    coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| i as f64 * c)
        .collect()
}

impl HyperbolicModel {
    pub fn new(coefficients: Vec<f64>, domain: Domain) -> Result<Self> {
        let m = Self {
            order: coefficients.len().saturating_sub(1),
            coefficients,
            domain,
        };
        m.check_shape()?;
        Ok(m)
    }

    /// The rock-shelter second-order model on `[0, 10000]`.
    pub fn rock_shelter() -> Self {
        Self {
            order: 2,
            coefficients: ROCK_SHELTER_COEFFICIENTS.to_vec(),
            domain: ROCK_SHELTER_DOMAIN,
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::Validation(format!(
                "hyperbolic order must be 1..={MAX_ORDER}, got {}",
                self.order
            )));
        }
        if self.coefficients.len() != self.order + 1 {
            return Err(Error::Validation(format!(
                "order {} needs {} coefficients, got {}",
                self.order,
                self.order + 1,
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite coefficient".into()));
        }
        Domain::new(self.domain.t_min, self.domain.t_max)?;
        Ok(())
    }

    /// `D(t) = sum a_i t^i`, evaluated without any domain check.
    pub fn denominator(&self, t: f64) -> f64 {
        horner(&self.coefficients, t)
    }

    /// `D'(t)`.
    pub fn denominator_slope(&self, t: f64) -> f64 {
        horner(&derivative(&self.coefficients), t)
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    fn checked_denominator(&self, t: f64) -> Result<f64> {
        if !self.domain.contains(t) {
            return Err(Error::OutOfDomain {
                t,
                t_min: self.domain.t_min,
                t_max: self.domain.t_max,
            });
        }
        let d = self.denominator(t);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Singularity { t });
        }
        Ok(d)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.checked_denominator(t).map(|d| 1.0 / d)
    }
}

impl ExponentialModel {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-self.rate * t).exp()
    }
}

impl PiecewiseExponentialModel {
    /// Late regime with rate `late_rate` whose level matches `early` at the
    /// breakpoint.
    pub fn joined(breakpoint: f64, early: ExponentialModel, late_rate: f64) -> Self {
        let level = early.eval(breakpoint);
        Self {
            breakpoint,
            early,
            late: ExponentialModel {
                amplitude: level * (late_rate * breakpoint).exp(),
                rate: late_rate,
            },
        }
    }

    pub fn segment(&self, t: f64) -> &ExponentialModel {
        if t >= self.breakpoint {
            &self.early
        } else {
            &self.late
        }
    }
}

impl GrowthModel {
    /// `N(t)`; always strictly positive on success.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::Validation(format!("non-finite time {t}")));
        }
        let v = match self {
            GrowthModel::Hyperbolic(h) => return h.eval(t),
            GrowthModel::Exponential(e) => e.eval(t),
            GrowthModel::PiecewiseExponential(p) => p.segment(t).eval(t),
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Singularity { t });
        }
        Ok(v)
    }

    /// Instantaneous growth rate along the arrow of time, `(-dN/dt) / N`.
    pub fn relative_growth_rate(&self, t: f64) -> Result<f64> {
        match self {
            GrowthModel::Hyperbolic(h) => {
                let d = h.checked_denominator(t)?;
                Ok(h.denominator_slope(t) / d)
            }
            GrowthModel::Exponential(e) => Ok(e.rate),
            GrowthModel::PiecewiseExponential(p) => Ok(p.segment(t).rate),
        }
    }

    /// Number of free parameters counted by the information criteria.
    pub fn parameter_count(&self) -> usize {
        match self {
            GrowthModel::Hyperbolic(h) => h.order + 1,
            GrowthModel::Exponential(_) => 2,
            GrowthModel::PiecewiseExponential(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GrowthModel::Hyperbolic(_) => "hyperbolic",
            GrowthModel::Exponential(_) => "exponential",
            GrowthModel::PiecewiseExponential(_) => "piecewise_exponential",
        }
    }

    /// Short identifier such as `hyperbolic_k2`.
    pub fn label(&self) -> String {
        match self {
            GrowthModel::Hyperbolic(h) => format!("hyperbolic_k{}", h.order),
            other => other.kind().to_string(),
        }
    }

    pub fn is_single_trend(&self) -> bool {
        !matches!(self, GrowthModel::PiecewiseExponential(_))
    }

    /// Shape checks plus, for hyperbolic models, positivity on the domain.
    pub fn validate(&self) -> Result<()> {
        match self {
            GrowthModel::Hyperbolic(h) => {
                h.check_shape()?;
                match validate_model_domain(h) {
                    DomainCheck::Valid => Ok(()),
                    DomainCheck::Invalid(t) => Err(Error::Validation(format!(
                        "denominator is non-positive at t = {t} inside the declared domain"
                    ))),
                }
            }
            GrowthModel::Exponential(e) => check_exponential(e),
            GrowthModel::PiecewiseExponential(p) => {
                if !p.breakpoint.is_finite() {
                    return Err(Error::Validation("non-finite breakpoint".into()));
                }
                check_exponential(&p.early)?;
                check_exponential(&p.late)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: GrowthModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

fn check_exponential(e: &ExponentialModel) -> Result<()> {
    if !(e.amplitude > 0.0 && e.amplitude.is_finite() && e.rate.is_finite()) {
        return Err(Error::Validation(format!(
            "exponential needs amplitude > 0 and a finite rate, got ({}, {})",
            e.amplitude, e.rate
        )));
    }
    Ok(())
}

impl fmt::Display for GrowthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthModel::Hyperbolic(h) => {
                write!(f, "hyperbolic k={} a=[", h.order)?;
                for (i, c) in h.coefficients.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c:e}")?;
                }
                write!(f, "] on [{}, {}]", h.domain.t_min, h.domain.t_max)
            }
            GrowthModel::Exponential(e) => {
                write!(f, "exponential C={} r={:e}", e.amplitude, e.rate)
            }
            GrowthModel::PiecewiseExponential(p) => write!(
                f,
                "piecewise exponential t_b={} early(C={}, r={:e}) late(C={}, r={:e})",
                p.breakpoint, p.early.amplitude, p.early.rate, p.late.amplitude, p.late.rate
            ),
        }
    }
}

impl From<HyperbolicModel> for GrowthModel {
    fn from(m: HyperbolicModel) -> Self {
        GrowthModel::Hyperbolic(m)
    }
}

impl From<ExponentialModel> for GrowthModel {
    fn from(m: ExponentialModel) -> Self {
        GrowthModel::Exponential(m)
    }
}

impl From<PiecewiseExponentialModel> for GrowthModel {
    fn from(m: PiecewiseExponentialModel) -> Self {
        GrowthModel::PiecewiseExponential(m)
    }
}

/// Checks `D(t) > 0` on the whole domain.
///
/// Degree 1 and 2 are decided from the closed-form roots. Degree 3 splits the
/// domain at the critical points of `D` into monotone pieces and bisects the
/// first piece that ends at or below zero.
pub fn validate_model_domain(m: &HyperbolicModel) -> DomainCheck {
    let mut coefficients = m.coefficients.clone();
    while coefficients.len() > 1 && coefficients[coefficients.len() - 1] == 0.0 {
        coefficients.pop();
    }
    let Domain { t_min, t_max } = m.domain;
    let first = match coefficients.len() {
        0 => Some(t_min),
        1 => (!(coefficients[0] > 0.0)).then_some(t_min),
        2 => first_nonpositive_linear(coefficients[0], coefficients[1], t_min, t_max),
        3 => first_nonpositive_quadratic(&coefficients, t_min, t_max),
        _ => first_nonpositive_isolated(&coefficients, t_min, t_max),
    };
    match first {
        Some(t) => DomainCheck::Invalid(t),
        None => DomainCheck::Valid,
    }
}

fn first_nonpositive_linear(a0: f64, a1: f64, t_min: f64, t_max: f64) -> Option<f64> {
    if a0 + a1 * t_min <= 0.0 {
        return Some(t_min);
    }
    if a1 >= 0.0 {
        return None;
    }
    let root = -a0 / a1;
    (root <= t_max).then_some(root.max(t_min))
}

/// Real roots of `c0 + c1 x + c2 x^2` with `c2 != 0`, ascending.
fn quadratic_roots(c0: f64, c1: f64, c2: f64) -> Option<(f64, f64)> {
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return None;
    }
    if disc == 0.0 {
        let r = -c1 / (2.0 * c2);
        return Some((r, r));
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 {
        let r = (-c0 / c2).sqrt();
        (-r, r)
    } else {
        (q / c2, c0 / q)
    };
    Some((r1.min(r2), r1.max(r2)))
}

fn first_nonpositive_quadratic(c: &[f64], t_min: f64, t_max: f64) -> Option<f64> {
    let (a0, a1, a2) = (c[0], c[1], c[2]);
    if horner(c, t_min) <= 0.0 {
        return Some(t_min);
    }
    match quadratic_roots(a0, a1, a2) {
        // no real root: sign of a2 everywhere
        None => (a2 < 0.0).then_some(t_min),
        Some((r1, r2)) => {
            if a2 > 0.0 {
                // D <= 0 exactly on [r1, r2]; D(t_min) > 0 so t_min is outside it
                (r1 <= t_max && r2 >= t_min).then(|| r1.max(t_min))
            } else {
                // D <= 0 outside (r1, r2); t_min is inside it
                (r2 <= t_max).then_some(r2)
            }
        }
    }
}

fn first_nonpositive_isolated(c: &[f64], t_min: f64, t_max: f64) -> Option<f64> {
    if horner(c, t_min) <= 0.0 {
        return Some(t_min);
    }
    let slope = derivative(c);
    let mut cuts = vec![t_min];
    let mut critical: Vec<f64> = match slope.len() {
        3 if slope[2] != 0.0 => quadratic_roots(slope[0], slope[1], slope[2])
            .map(|(a, b)| vec![a, b])
            .unwrap_or_default(),
        _ if slope.len() >= 2 && slope[1] != 0.0 => vec![-slope[0] / slope[1]],
        _ => Vec::new(),
    };
    critical.retain(|&x| x > t_min && x < t_max);
    critical.sort_by(f64::total_cmp);
    cuts.extend(critical);
    cuts.push(t_max);

    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let d_hi = horner(c, hi);
        if d_hi > 0.0 {
            continue;
        }
        if d_hi == 0.0 {
            // D(lo) > 0 and D is monotone on the piece
            return Some(hi);
        }
        let (mut a, mut b) = (lo, hi);
        bisect(c, &mut a, &mut b);
        return Some(b);
    }
    None
}

/// Shrinks `[a, b]` with `D(a) > 0 >= D(b)` to adjacent floats.
fn bisect(c: &[f64], a: &mut f64, b: &mut f64) {
    for _ in 0..200 {
        let mid = 0.5 * (*a + *b);
        if mid <= *a || mid >= *b {
            break;
        }
        if horner(c, mid) > 0.0 {
            *a = mid;
        } else {
            *b = mid;
        }
    }
}
