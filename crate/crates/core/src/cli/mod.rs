//! Config-driven experiment runner, report output, rate fitting and report diffs.

mod config;
mod scenarios;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{exponential_fit, power_fit, ExperimentReport, LinearFit, Series, Status};

pub use config::{ExperimentConfig, FamilyStart, GeometryKind, MeasureKind, SchemeKind, ScenarioKind, SettingKind};

/// Environment variable naming the directory that run outputs are written under.
pub const OUTPUT_ROOT_VAR: &str = "BERGFLOW_OUTPUT_ROOT";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("invalid {key} = `{value}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("include cycle through {0}")]
    IncludeCycle(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{scenario}: {message}")]
    Numerical { scenario: ScenarioKind, message: String },
    #[error("writing outputs: {0}")]
    Output(String),
}

/// Process exit status for a finished (or failed) run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Pass = 0,
    AssertionFailure = 1,
    ConfigurationError = 2,
    NumericalFailure = 3,
}

impl ExitCode {
    pub fn of_report(report: &ExperimentReport) -> Self {
        if report.failure.is_some() {
            ExitCode::NumericalFailure
        } else if report.passed() {
            ExitCode::Pass
        } else {
            ExitCode::AssertionFailure
        }
    }

    pub fn of_error(err: &RunError) -> Self {
        match err {
            RunError::Config(_) => ExitCode::ConfigurationError,
            RunError::Numerical { .. } | RunError::Output(_) => ExitCode::NumericalFailure,
        }
    }
}

/// Execute the scenario. The report carries the full config echo and wall time.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, RunError> {
    let start = Instant::now();
    let mut report = scenarios::execute(config)
        .map_err(|message| RunError::Numerical { scenario: config.scenario, message })?;
    report.scenario = config.scenario.as_str().to_string();
    report.config = config.echo.clone();
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// `$BERGFLOW_OUTPUT_ROOT/<output>`, defaulting the root to `runs`.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(&config.output)
}

/// Write one CSV per series plus `summary.json`; returns the written paths.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let err = |e: &dyn std::fmt::Display| RunError::Output(e.to_string());
    fs::create_dir_all(dir).map_err(|e| err(&e))?;
    let mut paths = vec![];
    for s in &report.series {
        let path = dir.join(format!("{}.csv", s.name));
        fs::write(&path, series_csv(s).map_err(|e| err(&e))?).map_err(|e| err(&e))?;
        paths.push(path);
    }
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| err(&e))?;
    fs::write(&path, json + "\n").map_err(|e| err(&e))?;
    paths.push(path);
    Ok(paths)
}

/// CSV bytes of a series: a header row, then shortest round-trip decimal values.
pub fn series_csv(s: &Series) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(&s.columns)?;
    for row in &s.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Read a CSV written by [`series_csv`] into named columns.
pub fn read_csv(path: &Path) -> Result<Series, FitError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| FitError::Read(e.to_string()))?;
    let columns: Vec<String> = r.headers().map_err(|e| FitError::Read(e.to_string()))?.iter().map(String::from).collect();
    let mut s = Series { name: path.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(), columns, rows: vec![] };
    for rec in r.records() {
        let rec = rec.map_err(|e| FitError::Read(e.to_string()))?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|_| FitError::Read(format!("not a number: {v}"))))
            .collect::<Result<Vec<_>, _>>()?;
        s.rows.push(row);
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateModel {
    /// `y = A x^p`, fitted on `(log x, log y)`.
    Power,
    /// `y = A e^{λx}`, fitted on `(x, log y)`.
    Exponential,
}

impl std::str::FromStr for RateModel {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, FitError> {
        match s {
            "power" => Ok(RateModel::Power),
            "exponential" => Ok(RateModel::Exponential),
            other => Err(FitError::UnknownModel(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("x and y have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("y must be positive and finite (point {0})")]
    NonPositive(usize),
    #[error("x must be finite{} and not all equal", if *.0 { " and positive" } else { "" })]
    DegenerateX(bool),
    #[error("unknown model `{0}` (expected power or exponential)")]
    UnknownModel(String),
    #[error("no column `{0}`")]
    MissingColumn(String),
    #[error("{0}")]
    Read(String),
}

pub fn fit_rate(x: &[f64], y: &[f64], model: RateModel) -> Result<LinearFit, FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(FitError::TooFewPoints(x.len()));
    }
    if let Some(i) = y.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(FitError::NonPositive(i));
    }
    let power = model == RateModel::Power;
    let bad_x = x.iter().any(|v| !v.is_finite() || (power && *v <= 0.0));
    if bad_x || x.iter().all(|v| *v == x[0]) {
        return Err(FitError::DegenerateX(power));
    }
    Ok(match model {
        RateModel::Power => power_fit(x, y),
        RateModel::Exponential => exponential_fit(x, y),
    })
}

/// Fit column `y` against column `x` (default: the first two columns).
pub fn fit_series(s: &Series, x: Option<&str>, y: Option<&str>, model: RateModel) -> Result<LinearFit, FitError> {
    let pick = |name: Option<&str>, default: usize| -> Result<Vec<f64>, FitError> {
        match name {
            Some(n) => s.column(n).ok_or_else(|| FitError::MissingColumn(n.to_string())),
            None => s
                .columns
                .get(default)
                .and_then(|c| s.column(c))
                .ok_or_else(|| FitError::MissingColumn(format!("#{default}"))),
        }
    };
    fit_rate(&pick(x, 0)?, &pick(y, 1)?, model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericChange {
    pub key: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextChange {
    pub key: String,
    pub a: Option<String>,
    pub b: Option<String>,
}

/// Field-wise differences between two reports of the same scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportDiff {
    pub config: Vec<TextChange>,
    pub summary: Vec<NumericChange>,
    /// Series that are missing on one side or differ beyond tolerance.
    pub series: Vec<String>,
    pub assertions: Vec<TextChange>,
}

impl ReportDiff {
    pub fn is_empty(&self) -> bool {
        self.config.is_empty() && self.summary.is_empty() && self.series.is_empty() && self.assertions.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot diff a `{0}` report against a `{1}` report")]
pub struct ScenarioMismatch(pub String, pub String);

/// Numeric entries count as changed when `|a − b| > tol·(1 + max(|a|, |b|))`. Wall time and
/// the config `output` key are ignored.
pub fn report_diff(a: &ExperimentReport, b: &ExperimentReport, tol: f64) -> Result<ReportDiff, ScenarioMismatch> {
    if a.scenario != b.scenario {
        return Err(ScenarioMismatch(a.scenario.clone(), b.scenario.clone()));
    }
    let differs = |x: f64, y: f64| {
        !(x == y || (x.is_nan() && y.is_nan()) || (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
    };
    let mut diff = ReportDiff::default();
    for key in union(&a.config, &b.config) {
        let (x, y) = (a.config.get(&key), b.config.get(&key));
        if key != "output" && x != y {
            diff.config.push(TextChange { key, a: x.cloned(), b: y.cloned() });
        }
    }
    for key in union(&a.summary, &b.summary) {
        let (x, y) = (a.summary.get(&key).copied(), b.summary.get(&key).copied());
        let changed = match (x, y) {
            (Some(x), Some(y)) => differs(x, y),
            _ => true,
        };
        if changed {
            diff.summary.push(NumericChange { key, a: x, b: y });
        }
    }
    let names: BTreeMap<&str, ()> = a.series.iter().chain(&b.series).map(|s| (s.name.as_str(), ())).collect();
    for name in names.keys() {
        let same = match (a.series(name), b.series(name)) {
            (Some(x), Some(y)) => {
                x.columns == y.columns
                    && x.rows.len() == y.rows.len()
                    && x.rows.iter().flatten().zip(y.rows.iter().flatten()).all(|(p, q)| !differs(*p, *q))
            }
            _ => false,
        };
        if !same {
            diff.series.push(name.to_string());
        }
    }
    let status = |r: &ExperimentReport| -> BTreeMap<String, String> {
        r.assertions.iter().map(|x| (x.name.clone(), status_str(x.status).to_string())).collect()
    };
    let (sa, sb) = (status(a), status(b));
    for key in union(&sa, &sb) {
        let (x, y) = (sa.get(&key), sb.get(&key));
        if x != y {
            diff.assertions.push(TextChange { key, a: x.cloned(), b: y.cloned() });
        }
    }
    Ok(diff)
}

fn status_str(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Skipped => "skipped",
    }
}

fn union<V>(a: &BTreeMap<String, V>, b: &BTreeMap<String, V>) -> Vec<String> {
    let mut keys: Vec<String> = a.keys().chain(b.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    keys
}

/// Load a `summary.json` report.
pub fn load_report(path: &Path) -> Result<ExperimentReport, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests;
