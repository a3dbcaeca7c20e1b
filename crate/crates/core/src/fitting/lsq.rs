//! Small dense least-squares helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of an R diagonal entry, against its column norm, below
/// which the design is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// Least squares of `y` on `{1, x, ..., x^degree}` via Householder QR.
/// Coefficients come back constant term first.
pub(crate) fn poly_least_squares(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let p = degree + 1;
    if n < p {
        return Err(Error::Underdetermined { needed: p, got: n });
    }
    let design = DMatrix::from_fn(n, p, |i, j| x[i].powi(j as i32));
    let beta = solve_least_squares(design, &DVector::from_column_slice(y)).ok_or(Error::RankDeficient)?;
    Ok(beta.iter().copied().collect())
}

/// Least-squares solution of `a x = b` for a tall, full-rank `a`.
pub(crate) fn solve_least_squares(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let p = a.ncols();
    let col_norms: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    let qr = a.qr();
    let r = qr.r();
    if (0..p).any(|j| col_norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * col_norms[j]) {
        return None;
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub rss: f64,
}

impl LineFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Simple linear regression with centered sums. `None` when fewer than two
/// distinct `x` values are present.
pub(crate) fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        sxx += dx * dx;
        sxy += dx * (yi - my);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let e = yi - (my + slope * (xi - mx));
            e * e
        })
        .sum();
    Some(LineFit {
        intercept,
        slope,
        rss,
    })
}
