//! Raw-scale refinement of hyperbolic coefficients by Levenberg–Marquardt.

use nalgebra::{DMatrix, DVector};

use super::lsq::solve_least_squares;
use super::{count_distinct, data_domain, time_scale, FitConfig, FitMethod, FitResult};
use crate::error::{Error, Result};
use crate::models::{validate_model_domain, Domain, HyperbolicModel};
use crate::timeseries::TimeSeries;

const INITIAL_DAMPING: f64 = 1e-3;
const DAMPING_FACTOR: f64 = 10.0;
/// Past this the step is vanishingly small and the search has stalled.
const MAX_DAMPING: f64 = 1e16;
/// A small relative step only counts as convergence when it was not forced
/// small by heavy damping.
const CONVERGED_DAMPING: f64 = 1.0;
/// Relative RSS gain predicted by the linearized model below which further
/// iterations cannot improve the fit in double precision.
const PREDICTED_GAIN_FLOOR: f64 = 1e-14;

pub(crate) struct LmOutcome {
    pub model: HyperbolicModel,
    pub converged: bool,
    pub iterations: usize,
    pub note: Option<String>,
}

/// Minimizes `sum (value - 1/D(t))^2` over the coefficients of `init`,
/// starting from `init`.
///
/// Damping starts at 1e-3 and is multiplied by 10 after a rejected step and
/// divided by 10 after an accepted one. A step is accepted only if it lowers
/// the residual sum of squares and keeps the denominator positive on the data
/// range, so the result never has a larger RSS than `init`.
pub fn refine_nls(ts: &TimeSeries, init: &HyperbolicModel, config: &FitConfig) -> Result<FitResult> {
    config.check()?;
    if init.order != config.order {
        return Err(Error::Precondition(format!(
            "initial model has order {}, config asks for {}",
            init.order, config.order
        )));
    }
    let (times, values) = (ts.times(), ts.values());
    let out = levenberg_marquardt(&times, &values, init, config)?;
    let mut fit = FitResult::new(out.model.into(), "nls", &times, &values)?;
    fit.converged = out.converged;
    fit.iterations = out.iterations;
    fit.config = Some(FitConfig {
        method: FitMethod::Nls,
        ..*config
    });
    fit.notes.extend(out.note);
    Ok(fit)
}

pub(crate) fn levenberg_marquardt(
    times: &[f64],
    values: &[f64],
    init: &HyperbolicModel,
    config: &FitConfig,
) -> Result<LmOutcome> {
    let order = init.order;
    let distinct = count_distinct(times);
    if distinct < order + 2 {
        return Err(Error::Underdetermined {
            needed: order + 2,
            got: distinct,
        });
    }
    let domain = data_domain(times);
    let s = time_scale(times, config.time_rescale);
    let u: Vec<f64> = times.iter().map(|t| t / s).collect();
    let scaled_domain = Domain {
        t_min: domain.t_min / s,
        t_max: domain.t_max / s,
    };
    let mut params: Vec<f64> = init
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, a)| a * s.powi(i as i32))
        .collect();

    let admissible = |b: &[f64]| {
        b.iter().all(|x| x.is_finite())
            && validate_model_domain(&HyperbolicModel {
                order,
                coefficients: b.to_vec(),
                domain: scaled_domain,
            })
            .is_valid()
    };
    if !admissible(&params) {
        return Err(Error::Precondition(
            "initial model is not positive on the data time range".into(),
        ));
    }

    let unscale = |b: &[f64]| HyperbolicModel {
        order,
        coefficients: b
            .iter()
            .enumerate()
            .map(|(i, x)| x / s.powi(i as i32))
            .collect(),
        domain,
    };

    let mut rss = rss_of(&u, values, &params);
    if rss == 0.0 {
        return Ok(LmOutcome {
            model: unscale(&params),
            converged: true,
            iterations: 0,
            note: None,
        });
    }

    let p = order + 1;
    let mut damping = INITIAL_DAMPING;
    let mut iterations = 0;
    let mut converged = false;
    let mut note = None;
    let mut any_accepted = false;

    while iterations < config.max_nls_iterations {
        iterations += 1;

        // J = d(residual)/d(b) with residual = value - 1/D
        let mut jac = DMatrix::<f64>::zeros(u.len(), p);
        let mut resid = DVector::<f64>::zeros(u.len());
        for (i, (&ui, &vi)) in u.iter().zip(values).enumerate() {
            let d = poly(&params, ui);
            resid[i] = vi - 1.0 / d;
            let mut pw = 1.0 / (d * d);
            for j in 0..p {
                jac[(i, j)] = pw;
                pw *= ui;
            }
        }
        let step = match damped_step(&jac, &resid, damping) {
            Some(step) => step,
            None => {
                damping *= DAMPING_FACTOR;
                if damping > MAX_DAMPING {
                    note = Some("damping limit reached: singular Jacobian".into());
                    break;
                }
                continue;
            }
        };
        let predicted_rss = (&resid + &jac * &step).norm_squared();

        let norm_b = params.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_step = step.norm();
        let relative_change = if norm_b > 0.0 { norm_step / norm_b } else { norm_step };

        let candidate: Vec<f64> = params.iter().zip(step.iter()).map(|(b, d)| b + d).collect();
        let candidate_rss = if admissible(&candidate) {
            rss_of(&u, values, &candidate)
        } else {
            f64::INFINITY
        };

        let accepted = candidate_rss < rss;
        if accepted {
            params = candidate;
            rss = candidate_rss;
            any_accepted = true;
        }
        // the linear model predicts no gain above rounding level
        let exhausted = rss - predicted_rss <= PREDICTED_GAIN_FLOOR * rss;
        if damping <= CONVERGED_DAMPING && (relative_change < config.nls_tolerance || exhausted) {
            converged = true;
            break;
        }
        if accepted {
            damping /= DAMPING_FACTOR;
        } else {
            damping *= DAMPING_FACTOR;
            if damping > MAX_DAMPING {
                note = Some(if any_accepted {
                    "stalled: no descent step found within the damping limit".into()
                } else {
                    "no admissible descent step from the initial model; returned it unchanged".into()
                });
                break;
            }
        }
    }

    if !converged && note.is_none() {
        note = Some(format!(
            "iteration cap of {} reached",
            config.max_nls_iterations
        ));
    }

    Ok(LmOutcome {
        model: unscale(&params),
        converged,
        iterations,
        note,
    })
}

/// Solves `min |r + J d|^2 + damping * sum_j |J_j|^2 d_j^2` by QR of the
/// stacked system `[J; sqrt(damping) diag|J_j|] d = [-r; 0]`.
fn damped_step(jac: &DMatrix<f64>, resid: &DVector<f64>, damping: f64) -> Option<DVector<f64>> {
    let (n, p) = jac.shape();
    let mut a = DMatrix::<f64>::zeros(n + p, p);
    a.view_mut((0, 0), (n, p)).copy_from(jac);
    for j in 0..p {
        let scale = jac.column(j).norm().max(f64::MIN_POSITIVE);
        a[(n + j, j)] = damping.sqrt() * scale;
    }
    let mut rhs = DVector::<f64>::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&(-resid));
    solve_least_squares(a, &rhs)
}

fn poly(b: &[f64], u: f64) -> f64 {
    b.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

fn rss_of(u: &[f64], values: &[f64], b: &[f64]) -> f64 {
    u.iter()
        .zip(values)
        .map(|(&ui, &vi)| (vi - 1.0 / poly(b, ui)).powi(2))
        .sum()
}
