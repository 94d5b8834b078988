//! Experiment reports: named numeric series, scalar summaries and assertion outcomes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

/// A table whose first column is the independent variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Series { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c.last().copied())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub series: Vec<Series>,
    pub summary: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
    /// Set when the run stopped early on a numerical failure.
    pub failure: Option<String>,
    pub wall_time: f64,
}

impl ExperimentReport {
    pub fn new(scenario: &str) -> Self {
        ExperimentReport {
            scenario: scenario.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        }
    }

    pub fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.assertions.push(Assertion { name: name.to_string(), status, detail: detail.into() });
    }

    pub fn skip(&mut self, name: &str, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.to_string(), status: Status::Skipped, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.assertions.iter().all(|a| a.status != Status::Fail)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

/// Whether every consecutive pair is nondecreasing up to `slack·(1 + |value|)`.
pub fn nondecreasing(values: &[f64], slack: f64) -> Result<(), (usize, f64)> {
    for (i, w) in values.windows(2).enumerate() {
        let drop = w[0] - w[1];
        if drop > slack * (1.0 + w[0].abs()) {
            return Err((i + 1, drop));
        }
    }
    Ok(())
}

/// Least-squares line `y ≈ slope·x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r2 }
}

/// Fit `y ≈ A x^p`; the slope of the result is `p`.
pub fn power_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Fit `y ≈ A e^{λx}`; the slope of the result is `λ`.
pub fn exponential_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(x, &ly)
}
