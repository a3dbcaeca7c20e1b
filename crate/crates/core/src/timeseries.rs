//! Time series indexed in years before present (BP).
//!
//! Larger `t_bp` is further in the past; the arrow of time runs from large
//! `t_bp` toward zero. A [`TimeSeries`] keeps its points sorted ascending by
//! `t_bp` with no duplicate times.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub t_bp: f64,
    pub value: f64,
}

impl Point {
    pub fn new(t_bp: f64, value: f64) -> Self {
        Self { t_bp, value }
    }
}

/// Ordered `(t_bp, value)` observations with a label.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    points: Vec<Point>,
    label: String,
    value_units: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Reciprocal,
    Log,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Reciprocal => "reciprocal",
            Transform::Log => "log",
        }
    }
}

impl TimeSeries {
    /// Validates and sorts `points`. Fails on an empty list, a duplicate
    /// time, a negative or non-finite time, or a non-positive value.
    pub fn new(points: Vec<Point>, label: impl Into<String>) -> Result<Self> {
        let mut points = points;
        if points.is_empty() {
            return Err(Error::Validation("empty data".into()));
        }
        for p in &points {
            check_point(p).map_err(Error::Validation)?;
        }
        points.sort_by(|a, b| a.t_bp.total_cmp(&b.t_bp));
        if let Some(w) = points.windows(2).find(|w| w[0].t_bp == w[1].t_bp) {
            return Err(Error::Validation(format!("duplicate t_bp {}", w[0].t_bp)));
        }
        Ok(Self {
            points,
            label: label.into(),
            value_units: String::new(),
        })
    }

    /// Builds a series from parallel time/value slices.
    pub fn from_pairs(times: &[f64], values: &[f64], label: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Validation(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        let points = times
            .iter()
            .zip(values)
            .map(|(&t, &v)| Point::new(t, v))
            .collect();
        Self::new(points, label)
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.value_units = units.into();
        self
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value_units(&self) -> &str {
        &self.value_units
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t_bp).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// `(min t_bp, max t_bp)`.
    pub fn time_range(&self) -> (f64, f64) {
        (self.points[0].t_bp, self.points[self.points.len() - 1].t_bp)
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let points = self
            .points
            .iter()
            .map(|p| Point::new(p.t_bp, p.value * factor))
            .collect();
        Self::new(points, self.label.clone()).map(|s| s.with_units(self.value_units.clone()))
    }

    /// Applies `kind` to every value. Times and point count are unchanged.
    ///
    /// The log transform may produce values `<= 0`; such a series is still
    /// returned but must not be fed to operations that need positive values.
    pub fn transform(&self, kind: Transform) -> Result<Self> {
        if let Some(p) = self.points.iter().find(|p| !(p.value > 0.0)) {
            return Err(Error::Validation(format!(
                "{} transform needs positive values; got {} at t_bp {}",
                kind.name(),
                p.value,
                p.t_bp
            )));
        }
        let f = match kind {
            Transform::Reciprocal => |v: f64| 1.0 / v,
            Transform::Log => f64::ln,
        };
        Ok(Self {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.t_bp, f(p.value)))
                .collect(),
            label: format!("{} ({})", self.label, kind.name()),
            value_units: self.value_units.clone(),
        })
    }

    /// Writes the series in the `t_bp,value` CSV format. Numbers use the
    /// shortest representation that parses back to the same `f64`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_bp,value\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.t_bp, p.value);
        }
        out
    }
}

/// Free-function form of [`TimeSeries::transform`].
pub fn transform_series(ts: &TimeSeries, kind: Transform) -> Result<TimeSeries> {
    ts.transform(kind)
}

fn check_point(p: &Point) -> std::result::Result<(), String> {
    if !p.t_bp.is_finite() || p.t_bp < 0.0 {
        return Err(format!("t_bp must be a finite value >= 0, got {}", p.t_bp));
    }
    if !p.value.is_finite() {
        return Err(format!("non-finite value {}", p.value));
    }
    if p.value <= 0.0 {
        return Err("non-positive value".into());
    }
    Ok(())
}

const HEADER: &str = "t_bp,value";

/// Parses `t_bp,value` CSV text.
///
/// Accepts LF or CRLF line endings, an optional `t_bp,value` header as the
/// first data line, `#` comment lines and blank lines. Rows come back sorted
/// ascending by `t_bp`.
pub fn parse_timeseries_csv(text: &str) -> Result<TimeSeries> {
    parse_timeseries_csv_labeled(text, "series")
}

pub fn parse_timeseries_csv_labeled(text: &str, label: &str) -> Result<TimeSeries> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut rows: Vec<(usize, Point)> = Vec::new();
    let mut seen_content = false;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if trimmed == HEADER {
                continue;
            }
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 columns, found {}", fields.len()),
            });
        }
        let t_bp = parse_field(fields[0], "t_bp", line_no)?;
        let value = parse_field(fields[1], "value", line_no)?;
        let p = Point::new(t_bp, value);
        check_point(&p).map_err(|m| Error::Validation(format!("{m}, line {line_no}")))?;
        rows.push((line_no, p));
    }

    if rows.is_empty() {
        return Err(Error::Validation("empty data".into()));
    }
    rows.sort_by(|a, b| a.1.t_bp.total_cmp(&b.1.t_bp));
    if let Some(w) = rows.windows(2).find(|w| w[0].1.t_bp == w[1].1.t_bp) {
        let line = w[0].0.max(w[1].0);
        return Err(Error::Validation(format!(
            "duplicate t_bp {}, line {line}",
            w[1].1.t_bp
        )));
    }
    TimeSeries::new(rows.into_iter().map(|(_, p)| p).collect(), label)
}

fn parse_field(field: &str, name: &str, line: usize) -> Result<f64> {
    let s = field.trim();
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{name} is not a number: {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{name} is not finite: {s:?}"),
        });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(ts: &TimeSeries) -> Vec<(f64, f64)> {
        ts.points().iter().map(|p| (p.t_bp, p.value)).collect()
    }

    #[test]
    fn parses_basic_csv() {
        let ts = parse_timeseries_csv("t_bp,value\n0,10\n100,8").unwrap();
        assert_eq!(pts(&ts), vec![(0.0, 10.0), (100.0, 8.0)]);
    }

    #[test]
    fn resorts_rows() {
        let ts = parse_timeseries_csv("t_bp,value\n100,8\n0,10").unwrap();
        assert_eq!(pts(&ts), vec![(0.0, 10.0), (100.0, 8.0)]);
    }

    #[test]
    fn rejects_non_positive_value_with_line() {
        let err = parse_timeseries_csv("t_bp,value\n0,-1").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("non-positive value, line 2"), "{err}");
    }

    #[test]
    fn headerless_crlf_comments_and_scientific() {
        let text = "# rock shelters\r\n\r\n0,1.5e3\r\n# mid\r\n50,1.2E3\r\n";
        let ts = parse_timeseries_csv(text).unwrap();
        assert_eq!(pts(&ts), vec![(0.0, 1500.0), (50.0, 1200.0)]);
    }

    #[test]
    fn malformed_rows_report_line() {
        match parse_timeseries_csv("t_bp,value\n0,1\n5,1,2\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        match parse_timeseries_csv("t_bp,value\n# c\nabc,1\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            parse_timeseries_csv("0,NaN").unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn duplicate_and_empty_are_validation_errors() {
        let err = parse_timeseries_csv("t_bp,value\n0,1\n10,2\n0,3\n").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate")), "{err}");
        assert!(matches!(
            parse_timeseries_csv("t_bp,value\n# nothing\n").unwrap_err(),
            Error::Validation(_)
        ));
        assert!(matches!(parse_timeseries_csv("").unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn header_only_allowed_first() {
        let err = parse_timeseries_csv("0,1\nt_bp,value\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn negative_time_rejected() {
        assert!(matches!(
            parse_timeseries_csv("-5,1\n").unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn reciprocal_and_log() {
        let ts = TimeSeries::from_pairs(&[0.0, 10.0], &[2.0, 4.0], "n").unwrap();
        let r = ts.transform(Transform::Reciprocal).unwrap();
        assert_eq!(pts(&r), vec![(0.0, 0.5), (10.0, 0.25)]);
        assert_eq!(r.label(), "n (reciprocal)");

        let one = TimeSeries::from_pairs(&[0.0], &[1.0], "n").unwrap();
        assert_eq!(pts(&one.transform(Transform::Log).unwrap()), vec![(0.0, 0.0)]);
    }

    #[test]
    fn reciprocal_of_reference_n0() {
        // 1/N(0) for the published second-order coefficients is a0.
        let ts = TimeSeries::from_pairs(&[0.0], &[1454.5455], "n").unwrap();
        let r = ts.transform(Transform::Reciprocal).unwrap();
        let v = r.points()[0].value;
        assert!(((v - 0.0006875) / 0.0006875).abs() < 1e-7, "{v}");
        // the exact value 1/a0 reproduces a0 to 1e-9
        let exact = TimeSeries::from_pairs(&[0.0], &[1.0 / 0.0006875], "n").unwrap();
        let v = exact.transform(Transform::Reciprocal).unwrap().points()[0].value;
        assert!(((v - 0.0006875) / 0.0006875).abs() < 1e-9);
    }

    fn arb_series() -> impl Strategy<Value = TimeSeries> {
        prop::collection::btree_map(0u32..100_000, 1e-6f64..1e9, 1..60).prop_map(|m| {
            let points = m
                .into_iter()
                .map(|(t, v)| Point::new(t as f64 * 0.25, v))
                .collect();
            TimeSeries::new(points, "p").unwrap()
        })
    }

    proptest! {
        #[test]
        fn double_reciprocal_is_identity(ts in arb_series()) {
            let back = ts
                .transform(Transform::Reciprocal).unwrap()
                .transform(Transform::Reciprocal).unwrap();
            prop_assert_eq!(back.len(), ts.len());
            for (a, b) in ts.points().iter().zip(back.points()) {
                prop_assert_eq!(a.t_bp, b.t_bp);
                prop_assert!(((a.value - b.value) / a.value).abs() <= 1e-12);
            }
        }

        #[test]
        fn log_preserves_times(ts in arb_series()) {
            let l = ts.transform(Transform::Log).unwrap();
            prop_assert_eq!(l.times(), ts.times());
        }

        #[test]
        fn csv_round_trip(ts in arb_series()) {
            let back = parse_timeseries_csv(&ts.to_csv()).unwrap();
            prop_assert_eq!(back.points(), ts.points());
        }
    }
}
