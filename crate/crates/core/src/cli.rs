//! Command-line front end. Every subcommand writes a JSON report, CSV or SVG
//! and maps library errors onto exit codes: 0 success, 2 I/O, 3 bad input or
//! flags, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{diagnose, DiagnoseOptions, Diagnostics, Thresholds};
use crate::error::{Error, Result};
use crate::fitting::{fit_hyperbolic, FitConfig, FitMethod, FitResult, DEFAULT_MIN_SEGMENT};
use crate::models::GrowthModel;
use crate::render::{render_plot, AxisMode, Overlay, PlotSpec, SeriesStyle};
use crate::synth::{arithmetic_grid, run_illusion_experiment, sample_series, IllusionExperimentReport, NoiseSpec};
use crate::timeseries::{parse_timeseries_csv_labeled, TimeSeries};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Top-level JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    /// SHA-256 of the input file bytes, lowercase hex.
    pub input_digest: String,
    pub fits: Vec<FitResult>,
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub experiment: Option<IllusionExperimentReport>,
}

impl Report {
    fn new(input: &[u8]) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_digest: hex::encode(Sha256::digest(input)),
            fits: Vec::new(),
            diagnostics: None,
            experiment: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Parser)]
#[command(name = "hypergrowth", version, about = "Hyperbolic growth fitting and turning-point diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a hyperbolic model of one order and print a JSON report.
    Fit(FitArgs),
    /// Fit the full model menu and print a report with the turning-point verdict.
    Diagnose(DiagnoseArgs),
    /// Sample a noisy series from a model, or run repeated trials with --trials.
    Simulate(SimulateArgs),
    /// Render a series (and optional model overlays) as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Recip,
    Nls,
    #[value(name = "recip+nls")]
    RecipNls,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Recip => FitMethod::ReciprocalOls,
            MethodArg::Nls => FitMethod::Nls,
            MethodArg::RecipNls => FitMethod::ReciprocalThenNls,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    csv: PathBuf,
    #[arg(long)]
    order: usize,
    #[arg(long, value_enum, default_value = "recip+nls")]
    method: MethodArg,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    /// Write the report here instead of stdout.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MenuArgs {
    #[arg(long, default_value_t = 10.0)]
    bic_margin: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SEGMENT)]
    min_segment: usize,
    /// Hyperbolic orders in the single-trend menu.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    orders: Vec<usize>,
    #[arg(long, value_enum, default_value = "recip+nls")]
    method: MethodArg,
    /// Do not require a downward reciprocal break for a turning-point verdict.
    #[arg(long)]
    allow_upward: bool,
}

impl MenuArgs {
    fn options(&self) -> Result<DiagnoseOptions> {
        if !(self.bic_margin >= 0.0 && self.bic_margin.is_finite()) {
            return Err(Error::Validation(format!(
                "--bic-margin must be finite and >= 0, got {}",
                self.bic_margin
            )));
        }
        if self.orders.is_empty() {
            return Err(Error::Validation("--orders is empty".into()));
        }
        for &k in &self.orders {
            FitConfig::with_order(k).check()?;
        }
        Ok(DiagnoseOptions {
            orders: self.orders.clone(),
            fit: FitConfig::default().with_method(self.method.into()),
            min_segment: self.min_segment,
            thresholds: Thresholds {
                bic_margin: self.bic_margin,
                downward_required: !self.allow_upward,
            },
        })
    }
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    csv: PathBuf,
    #[command(flatten)]
    menu: MenuArgs,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Model JSON as written in a report's `fits[].model`.
    #[arg(long)]
    model: PathBuf,
    /// Inclusive grid `t0:t1:step` in years BP.
    #[arg(long)]
    grid: String,
    /// `none`, `lognormal:SIGMA` or `gaussian:SIGMA`.
    #[arg(long, default_value = "none")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run this many trials and print an experiment report instead of a CSV.
    #[arg(long)]
    trials: Option<usize>,
    /// Per-trial CSV dump (with --trials).
    #[arg(long)]
    trials_csv: Option<PathBuf>,
    #[command(flatten)]
    menu: MenuArgs,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Linear,
    Semilog,
    Reciprocal,
}

impl From<ModeArg> for AxisMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Linear => AxisMode::Linear,
            ModeArg::Semilog => AxisMode::SemilogY,
            ModeArg::Reciprocal => AxisMode::ReciprocalY,
        }
    }
}

#[derive(Debug, Args)]
struct PlotArgs {
    csv: PathBuf,
    #[arg(long, value_enum, default_value = "linear")]
    mode: ModeArg,
    /// Model JSON to draw over the data; repeatable.
    #[arg(long)]
    overlay: Vec<PathBuf>,
    #[arg(short = 'o', long)]
    output: PathBuf,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long, default_value = "Value")]
    value_label: String,
    /// Draw time increasing to the right.
    #[arg(long)]
    forward_time: bool,
    #[arg(long, default_value_t = crate::render::DEFAULT_WIDTH)]
    width: u32,
    #[arg(long, default_value_t = crate::render::DEFAULT_HEIGHT)]
    height: u32,
}

/// Outcome of a successful command: text for stdout (if any) and whether a
/// fit failed to converge.
struct Done {
    stdout: Option<String>,
    not_converged: Vec<String>,
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_INVALID
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match outcome {
        Ok(done) => {
            if let Some(text) = done.stdout {
                if let Err(e) = stdout.write_all(text.as_bytes()) {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_IO;
                }
            }
            if done.not_converged.is_empty() {
                EXIT_OK
            } else {
                for label in &done.not_converged {
                    let _ = writeln!(stderr, "error: fit did not converge: {label}");
                }
                EXIT_NUMERICAL
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn load_series(path: &Path) -> Result<(Vec<u8>, TimeSeries)> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Validation(format!("{} is not UTF-8", path.display())))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ts = parse_timeseries_csv_labeled(&text, &label)?;
    Ok((bytes, ts))
}

fn load_model(path: &Path) -> Result<(Vec<u8>, GrowthModel)> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Validation(format!("{} is not UTF-8", path.display())))?;
    let model = GrowthModel::from_json(&text)?;
    Ok((bytes, model))
}

fn emit(text: String, output: Option<&Path>) -> Result<Option<String>> {
    match output {
        Some(path) => {
            write_output(path, &text)?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}

fn unconverged(fits: &[FitResult]) -> Vec<String> {
    fits.iter()
        .filter(|f| !f.converged)
        .map(|f| format!("{} ({})", f.model.label(), f.notes.join("; ")))
        .collect()
}

fn cmd_fit(a: FitArgs) -> Result<Done> {
    let config = FitConfig {
        method: a.method.into(),
        order: a.order,
        max_nls_iterations: a.max_iterations,
        ..FitConfig::default()
    };
    config.check()?;
    let (bytes, ts) = load_series(&a.csv)?;
    let mut report = Report::new(&bytes);
    report.fits = fit_hyperbolic(&ts, &config)?.into_vec();
    let not_converged = unconverged(&report.fits);
    Ok(Done {
        stdout: emit(report.to_json()?, a.output.as_deref())?,
        not_converged,
    })
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<Done> {
    let opts = a.menu.options()?;
    let (bytes, ts) = load_series(&a.csv)?;
    let d = diagnose(&ts, &opts)?;
    let mut report = Report::new(&bytes);
    let not_converged = unconverged(&d.fits);
    report.fits = d.fits;
    report.diagnostics = Some(d.diagnostics);
    Ok(Done {
        stdout: emit(report.to_json()?, a.output.as_deref())?,
        not_converged,
    })
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [t0, t1, step] = parts[..] else {
        return Err(Error::Validation(format!("--grid must be t0:t1:step, got {text:?}")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Validation(format!("bad grid number {s:?}")))
    };
    arithmetic_grid(num(t0)?, num(t1)?, num(step)?)
}

fn cmd_simulate(a: SimulateArgs) -> Result<Done> {
    let grid = parse_grid(&a.grid)?;
    let noise = NoiseSpec::parse(&a.noise)?;
    let opts = a.menu.options()?;
    if a.trials_csv.is_some() && a.trials.is_none() {
        return Err(Error::Validation("--trials-csv needs --trials".into()));
    }
    let (bytes, model) = load_model(&a.model)?;
    model.validate()?;

    let text = match a.trials {
        None => sample_series(&model, &grid, noise, a.seed)?.to_csv(),
        Some(n) => {
            let exp = run_illusion_experiment(&model, &grid, noise, n, a.seed, &opts)?;
            if let Some(path) = &a.trials_csv {
                write_output(path, &exp.trials_csv())?;
            }
            let mut report = Report::new(&bytes);
            report.experiment = Some(exp);
            report.to_json()?
        }
    };
    Ok(Done {
        stdout: emit(text, a.output.as_deref())?,
        not_converged: Vec::new(),
    })
}

fn cmd_plot(a: PlotArgs) -> Result<Done> {
    let (_, ts) = load_series(&a.csv)?;
    let mut spec = PlotSpec {
        axis_mode: a.mode.into(),
        time_axis_reversed: !a.forward_time,
        title: a.title,
        value_label: a.value_label,
        width: a.width,
        height: a.height,
        ..PlotSpec::default()
    }
    .with_series(ts, SeriesStyle::Scatter);
    for path in &a.overlay {
        let (_, model) = load_model(path)?;
        let label = model.label();
        spec = spec.with_overlay(Overlay::new(model, label));
    }
    let svg = render_plot(&spec)?;
    write_output(&a.output, &svg)?;
    Ok(Done {
        stdout: None,
        not_converged: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("hypergrowth").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_and_version_exit_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("diagnose"));
        assert_eq!(run_args(&["--version"]).0, 0);
    }

    #[test]
    fn bad_flags_exit_three() {
        assert_eq!(run_args(&[]).0, 3);
        assert_eq!(run_args(&["fit", "x.csv"]).0, 3);
        assert_eq!(run_args(&["fit", "x.csv", "--order", "2", "--method", "magic"]).0, 3);
        assert_eq!(run_args(&["fit", "x.csv", "--order", "7"]).0, 3);
    }

    #[test]
    fn missing_file_exits_two() {
        let (code, _, err) = run_args(&["fit", "/nonexistent/missing.csv", "--order", "2"]);
        assert_eq!(code, 2);
        assert!(err.contains("missing.csv"));
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:100:50").unwrap(), vec![0.0, 50.0, 100.0]);
        assert!(parse_grid("0:100").is_err());
        assert!(parse_grid("0:x:1").is_err());
    }

    #[test]
    fn digest_is_sha256_hex() {
        let r = Report::new(b"abc");
        assert_eq!(
            r.input_digest,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
