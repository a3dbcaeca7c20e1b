//! SVG views of series and fitted curves (linear, semi-log, reciprocal) and
//! fitted-curve CSV export.
//!
//! Output is a plain SVG 1.1 document with coordinates printed to two
//! decimals, so identical specs give identical bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::GrowthModel;
use crate::timeseries::TimeSeries;

pub const DEFAULT_WIDTH: u32 = 800;
pub const DEFAULT_HEIGHT: u32 = 600;
pub const DEFAULT_OVERLAY_SAMPLES: usize = 256;
pub const TIME_AXIS_LABEL: &str = "Time [Years BP]";

const PAD_FRACTION: f64 = 0.05;
const N_TICKS: usize = 6;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeriesStyle {
    #[default]
    Scatter,
    Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AxisMode {
    #[default]
    Linear,
    SemilogY,
    ReciprocalY,
}

impl AxisMode {
    /// Value mapped onto the vertical axis.
    fn forward(self, v: f64) -> f64 {
        match self {
            AxisMode::Linear => v,
            AxisMode::SemilogY => v.log10(),
            AxisMode::ReciprocalY => 1.0 / v,
        }
    }

    /// Tick label value for a position on the vertical axis.
    fn label_value(self, y: f64) -> f64 {
        match self {
            AxisMode::SemilogY => 10f64.powf(y),
            _ => y,
        }
    }

    fn needs_positive(self) -> bool {
        self != AxisMode::Linear
    }

    pub fn axis_label(self, value_label: &str) -> String {
        match self {
            AxisMode::Linear => value_label.to_string(),
            AxisMode::SemilogY => format!("{value_label} (log scale)"),
            AxisMode::ReciprocalY => format!("1 / {value_label}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub series: TimeSeries,
    pub style: SeriesStyle,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub model: GrowthModel,
    pub label: String,
    pub samples: usize,
    /// Time range to sample. Defaults to the plotted series' range, or the
    /// model's own domain when there is no series.
    pub range: Option<(f64, f64)>,
}

impl Overlay {
    pub fn new(model: GrowthModel, label: impl Into<String>) -> Self {
        Self {
            model,
            label: label.into(),
            samples: DEFAULT_OVERLAY_SAMPLES,
            range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub series: Vec<PlotSeries>,
    pub overlays: Vec<Overlay>,
    pub axis_mode: AxisMode,
    /// Larger `t_bp` on the left, so time runs right to left.
    pub time_axis_reversed: bool,
    pub title: String,
    pub value_label: String,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            series: Vec::new(),
            overlays: Vec::new(),
            axis_mode: AxisMode::Linear,
            time_axis_reversed: true,
            title: String::new(),
            value_label: "Value".into(),
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
        }
    }
}

impl PlotSpec {
    pub fn with_series(mut self, series: TimeSeries, style: SeriesStyle) -> Self {
        let label = series.label().to_string();
        self.series.push(PlotSeries { series, style, label });
        self
    }

    pub fn with_overlay(mut self, overlay: Overlay) -> Self {
        self.overlays.push(overlay);
        self
    }

    pub fn with_mode(mut self, mode: AxisMode) -> Self {
        self.axis_mode = mode;
        self
    }
}

/// A plotted layer in axis space (`x = t_bp`, `y` already mapped by the axis
/// mode) and in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerData {
    pub label: String,
    pub style: SeriesStyle,
    pub is_overlay: bool,
    pub axis_points: Vec<(f64, f64)>,
    pub pixels: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// Padded time range.
    pub x_range: (f64, f64),
    /// Padded range in axis space.
    pub y_range: (f64, f64),
    /// Plot area as `(left, top, width, height)` in pixels.
    pub area: (f64, f64, f64, f64),
    pub layers: Vec<LayerData>,
}

impl PlotData {
    /// Vertical position of a pixel `y` within the plot area: 0 at the
    /// bottom edge, 1 at the top.
    pub fn relative_y(&self, py: f64) -> f64 {
        let (_, top, _, h) = self.area;
        (top + h - py) / h
    }
}

/// Maps every series and sampled overlay to axis space and pixels.
pub fn plot_data(spec: &PlotSpec) -> Result<PlotData> {
    if spec.series.is_empty() && spec.overlays.is_empty() {
        return Err(Error::Validation("plot needs at least one series or overlay".into()));
    }
    if spec.width < 200 || spec.height < 150 {
        return Err(Error::Validation(format!(
            "plot size {}x{} is too small",
            spec.width, spec.height
        )));
    }
    let mode = spec.axis_mode;
    let mut layers = Vec::new();

    for s in &spec.series {
        let mut pts = Vec::with_capacity(s.series.len());
        for p in s.series.points() {
            pts.push((p.t_bp, map_value(mode, p.t_bp, p.value)?));
        }
        layers.push(LayerData {
            label: s.label.clone(),
            style: s.style,
            is_overlay: false,
            axis_points: pts,
            pixels: Vec::new(),
        });
    }

    let data_range = spec
        .series
        .iter()
        .map(|s| s.series.time_range())
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
    for o in &spec.overlays {
        o.model.validate()?;
        if o.samples < 2 {
            return Err(Error::Validation("overlay needs at least 2 samples".into()));
        }
        let (t0, t1) = match (o.range, data_range, &o.model) {
            (Some(r), _, _) => r,
            (None, Some(r), _) => r,
            (None, None, GrowthModel::Hyperbolic(h)) => (h.domain.t_min, h.domain.t_max),
            (None, None, _) => {
                return Err(Error::Validation(
                    "overlay without a series or hyperbolic domain needs an explicit range".into(),
                ))
            }
        };
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::Validation(format!("bad overlay range [{t0}, {t1}]")));
        }
        let step = (t1 - t0) / (o.samples - 1) as f64;
        let mut pts = Vec::with_capacity(o.samples);
        for i in 0..o.samples {
            let t = if i + 1 == o.samples { t1 } else { t0 + step * i as f64 };
            let v = o.model.eval(t)?;
            pts.push((t, map_value(mode, t, v)?));
        }
        layers.push(LayerData {
            label: o.label.clone(),
            style: SeriesStyle::Line,
            is_overlay: true,
            axis_points: pts,
            pixels: Vec::new(),
        });
    }

    let all = || layers.iter().flat_map(|l| l.axis_points.iter());
    let x_range = padded(all().map(|p| p.0));
    let y_range = padded(all().map(|p| p.1));

    let (w, h) = (spec.width as f64, spec.height as f64);
    let area = (
        MARGIN_LEFT,
        MARGIN_TOP,
        w - MARGIN_LEFT - MARGIN_RIGHT,
        h - MARGIN_TOP - MARGIN_BOTTOM,
    );
    let to_px = |x: f64, y: f64| {
        let fx = (x - x_range.0) / (x_range.1 - x_range.0);
        let fx = if spec.time_axis_reversed { 1.0 - fx } else { fx };
        let fy = (y - y_range.0) / (y_range.1 - y_range.0);
        (area.0 + fx * area.2, area.1 + (1.0 - fy) * area.3)
    };
    for l in &mut layers {
        l.pixels = l.axis_points.iter().map(|&(x, y)| to_px(x, y)).collect();
    }

    Ok(PlotData {
        x_range,
        y_range,
        area,
        layers,
    })
}

fn map_value(mode: AxisMode, t: f64, v: f64) -> Result<f64> {
    if mode.needs_positive() && !(v > 0.0) {
        return Err(Error::Validation(format!(
            "value {v} at t = {t} cannot be shown on a {mode:?} axis"
        )));
    }
    let y = mode.forward(v);
    if !y.is_finite() {
        return Err(Error::Validation(format!("value {v} at t = {t} is not plottable")));
    }
    Ok(y)
}

fn padded(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let span = hi - lo;
    if span > 0.0 {
        (lo - PAD_FRACTION * span, hi + PAD_FRACTION * span)
    } else {
        let half = 0.5 * lo.abs().max(1.0) * PAD_FRACTION * 2.0;
        (lo - half, hi + half)
    }
}

/// Renders the spec as an SVG 1.1 document.
pub fn render_plot(spec: &PlotSpec) -> Result<String> {
    let data = plot_data(spec)?;
    let (left, top, aw, ah) = data.area;
    let (w, h) = (spec.width, spec.height);
    let mut s = String::new();

    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    if !spec.title.is_empty() {
        let _ = writeln!(
            s,
            r#"<text class="title" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="16">{}</text>"#,
            w as f64 / 2.0,
            top / 2.0 + 6.0,
            escape(&spec.title)
        );
    }

    // frame, ticks and grid
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{left:.2}" y="{top:.2}" width="{aw:.2}" height="{ah:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<g class="x-axis">"#);
    for i in 0..N_TICKS {
        let f = i as f64 / (N_TICKS - 1) as f64;
        let t = data.x_range.0 + f * (data.x_range.1 - data.x_range.0);
        let fx = if spec.time_axis_reversed { 1.0 - f } else { f };
        let px = left + fx * aw;
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#999"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            top + ah,
            top + ah + 5.0,
            top + ah + 20.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + aw / 2.0,
        top + ah + 45.0,
        TIME_AXIS_LABEL
    );
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="y-axis">"#);
    for i in 0..N_TICKS {
        let f = i as f64 / (N_TICKS - 1) as f64;
        let y = data.y_range.0 + f * (data.y_range.1 - data.y_range.0);
        let py = top + (1.0 - f) * ah;
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{left:.2}" y2="{py:.2}" stroke="#999"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick_label(spec.axis_mode.label_value(y))
        );
    }
    let (lx, ly) = (20.0, top + ah / 2.0);
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&spec.axis_mode.axis_label(&spec.value_label))
    );
    let _ = writeln!(s, "</g>");

    // layers
    for (i, layer) in data.layers.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let class = if layer.is_overlay { "overlay" } else { "series" };
        let _ = writeln!(s, r#"<g class="{class}">"#);
        let _ = writeln!(s, "<title>{}</title>", escape(&layer.label));
        match layer.style {
            SeriesStyle::Scatter => {
                for &(px, py) in &layer.pixels {
                    let _ = writeln!(
                        s,
                        r#"<circle class="marker" cx="{px:.2}" cy="{py:.2}" r="3" fill="{color}"/>"#
                    );
                }
            }
            SeriesStyle::Line => {
                let pts: Vec<String> = layer.pixels.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }

    // legend
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (i, layer) in data.layers.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = top + 15.0 + 16.0 * i as f64;
        let x = left + aw - 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
            y - 9.0,
            x + 15.0,
            escape(&layer.label)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e6).contains(&a) {
        let decimals = (3 - a.log10().floor() as i32).max(0) as usize;
        let text = format!("{v:.decimals$}");
        if text.contains('.') {
            text.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            text
        }
    } else {
        format!("{v:.3e}")
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Model values on `grid` as `t_bp,value` CSV, readable by the series parser.
pub fn export_curve_csv(m: &GrowthModel, grid: &[f64]) -> Result<String> {
    if grid.is_empty() {
        return Err(Error::Validation("empty grid".into()));
    }
    m.validate()?;
    let mut out = String::from("t_bp,value\n");
    for &t in grid {
        let v = m.eval(t)?;
        let _ = writeln!(out, "{t},{v}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ExponentialModel, HyperbolicModel};
    use crate::timeseries::{parse_timeseries_csv, Transform};

    fn reference() -> GrowthModel {
        HyperbolicModel::rock_shelter().into()
    }

    fn two_points() -> TimeSeries {
        TimeSeries::from_pairs(&[0.0, 10_000.0], &[1454.5, 89.65], "two").unwrap()
    }

    fn parse_svg(svg: &str) -> usize {
        let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        doc.descendants()
            .filter(|n| n.tag_name().name() == "circle" && n.attribute("class") == Some("marker"))
            .count()
    }

    #[test]
    fn two_point_scatter() {
        let spec = PlotSpec::default().with_series(two_points(), SeriesStyle::Scatter);
        let svg = render_plot(&spec).unwrap();
        assert_eq!(parse_svg(&svg), 2);
        assert!(svg.contains(TIME_AXIS_LABEL));
    }

    #[test]
    fn deterministic() {
        let spec = PlotSpec::default()
            .with_series(two_points(), SeriesStyle::Scatter)
            .with_overlay(Overlay::new(reference(), "fit"))
            .with_mode(AxisMode::SemilogY);
        assert_eq!(render_plot(&spec).unwrap(), render_plot(&spec).unwrap());
    }

    #[test]
    fn reversed_time_puts_older_on_the_left() {
        let spec = PlotSpec::default().with_series(two_points(), SeriesStyle::Scatter);
        let d = plot_data(&spec).unwrap();
        let px = &d.layers[0].pixels;
        assert!(px[1].0 < px[0].0);
        let fwd = PlotSpec { time_axis_reversed: false, ..spec };
        let px = plot_data(&fwd).unwrap().layers[0].pixels.clone();
        assert!(px[1].0 > px[0].0);
    }

    #[test]
    fn padding_is_five_percent() {
        let spec = PlotSpec::default().with_series(two_points(), SeriesStyle::Scatter);
        let d = plot_data(&spec).unwrap();
        assert!((d.x_range.0 + 500.0).abs() < 1e-9);
        assert!((d.x_range.1 - 10_500.0).abs() < 1e-9);
        let span = 1454.5 - 89.65;
        assert!((d.y_range.0 - (89.65 - 0.05 * span)).abs() < 1e-9);
    }

    #[test]
    fn reciprocal_overlay_endpoints() {
        let spec = PlotSpec::default()
            .with_overlay(Overlay::new(reference(), "reference"))
            .with_mode(AxisMode::ReciprocalY);
        let d = plot_data(&spec).unwrap();
        let pts = &d.layers[0].axis_points;
        assert_eq!(pts.len(), 256);
        assert_eq!(pts[0].0, 0.0);
        assert_eq!(pts[255].0, 10_000.0);
        assert!((pts[0].1 - 0.0006875).abs() < 1e-6);
        assert!((pts[255].1 - 0.0111543).abs() < 1e-6);

        let csv = export_curve_csv(&reference(), &[0.0, 10_000.0]).unwrap();
        let recip = parse_timeseries_csv(&csv).unwrap().transform(Transform::Reciprocal).unwrap();
        assert!((recip.values()[0] - 0.0006875).abs() < 1e-6);
        assert!((recip.values()[1] - 0.0111543).abs() < 1e-6);
    }

    #[test]
    fn semilog_matches_linear_of_log() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 500.0).collect();
        let m = reference();
        let values: Vec<f64> = times.iter().map(|&t| m.eval(t).unwrap() * (1.0 + 0.3 * (t / 700.0).sin())).collect();
        let ts = TimeSeries::from_pairs(&times, &values, "s").unwrap();
        let logged = ts.transform(Transform::Log).unwrap();

        let semi = plot_data(&PlotSpec::default().with_series(ts, SeriesStyle::Scatter).with_mode(AxisMode::SemilogY)).unwrap();
        let lin = plot_data(&PlotSpec::default().with_series(logged, SeriesStyle::Scatter)).unwrap();
        for (a, b) in semi.layers[0].pixels.iter().zip(&lin.layers[0].pixels) {
            let h = semi.area.3;
            assert!((semi.relative_y(a.1) - lin.relative_y(b.1)).abs() * h < 0.5);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(render_plot(&PlotSpec::default()).is_err());
        let ts = TimeSeries::from_pairs(&[0.0, 1.0, 2.0], &[2.0, 1.0, 0.5], "x").unwrap();
        let logged = ts.transform(Transform::Log).unwrap();
        let spec = PlotSpec::default().with_series(logged, SeriesStyle::Line);
        assert!(render_plot(&spec).is_ok());
        assert!(matches!(
            render_plot(&spec.clone().with_mode(AxisMode::SemilogY)),
            Err(Error::Validation(_))
        ));
        assert!(render_plot(&spec.with_mode(AxisMode::ReciprocalY)).is_err());
    }

    #[test]
    fn escapes_labels() {
        let spec = PlotSpec {
            title: "a < b & c".into(),
            ..PlotSpec::default().with_series(two_points(), SeriesStyle::Line)
        };
        let svg = render_plot(&spec).unwrap();
        assert_eq!(parse_svg(&svg), 0);
        assert!(svg.contains("a &lt; b &amp; c"));
    }

    #[test]
    fn curve_csv() {
        let csv = export_curve_csv(&reference(), &[0.0]).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(row.starts_with("0,1454.545454"));
        assert!((v - 1454.545454545454545).abs() < 1e-9);

        let flat = GrowthModel::from(ExponentialModel { amplitude: 1.0, rate: 0.0 });
        assert_eq!(export_curve_csv(&flat, &[0.0, 1.0]).unwrap(), "t_bp,value\n0,1\n1,1\n");
        assert!(matches!(
            export_curve_csv(&reference(), &[0.0, 12_000.0]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn curve_csv_round_trips() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 100.0).collect();
        let csv = export_curve_csv(&reference(), &grid).unwrap();
        let ts = parse_timeseries_csv(&csv).unwrap();
        for (p, &t) in ts.points().iter().zip(&grid) {
            assert_eq!(p.value, reference().eval(t).unwrap());
        }
    }
}
