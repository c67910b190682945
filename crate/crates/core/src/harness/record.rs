//! Run output: one JSON document per run plus an optional flat CSV.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::hypgeom::DiskPoint;
use crate::pointproc::Extrapolation;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Statistical comparisons pass within this many combined standard errors.
pub const PASS_SIGMAS: f64 = 4.0;

/// `(label, u, ε, centers, r_lo, r_hi)`.
pub type CellKey = (String, Option<[f64; 2]>, Option<f64>, Vec<[f64; 2]>, Option<f64>, Option<f64>);

/// One estimate (or deterministic check) of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<DiskPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub centers: Vec<DiskPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_hi: Option<f64>,
    pub value: f64,
    pub std_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<f64>,
    /// `(value − prediction)/std_error`, or the raw deviation for
    /// deterministic checks (`std_error = 0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

impl Cell {
    pub fn new(label: impl Into<String>, value: f64, std_error: f64) -> Self {
        Cell {
            label: label.into(),
            u: None,
            epsilon: None,
            centers: Vec::new(),
            r_lo: None,
            r_hi: None,
            value,
            std_error,
            trials: None,
            hits: None,
            prediction: None,
            deviation: None,
            passed: None,
        }
    }

    pub fn at_u(mut self, u: DiskPoint) -> Self {
        self.u = Some(u);
        self
    }

    pub fn with_balls(mut self, centers: &[DiskPoint], epsilon: f64) -> Self {
        self.centers = centers.to_vec();
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_counts(mut self, trials: u64, hits: Option<u64>) -> Self {
        self.trials = Some(trials);
        self.hits = hits;
        self
    }

    /// Compares against `prediction` at the [`PASS_SIGMAS`] policy.
    pub fn predicted(mut self, prediction: f64) -> Self {
        let dev = sigma_deviation(self.value - prediction, self.std_error);
        self.prediction = Some(prediction);
        self.deviation = Some(dev);
        self.passed = Some(dev.abs() <= PASS_SIGMAS);
        self
    }

    /// Deterministic check: passes when `|value| ≤ tolerance`.
    pub fn within(mut self, tolerance: f64) -> Self {
        self.deviation = Some(self.value);
        self.passed = Some(self.value.abs() <= tolerance);
        self
    }

    /// Geometry key used to pair cells across records.
    pub fn key(&self) -> CellKey {
        (
            self.label.clone(),
            self.u.map(Into::into),
            self.epsilon,
            self.centers.iter().map(|&c| c.into()).collect(),
            self.r_lo,
            self.r_hi,
        )
    }
}

/// Deviation in standard errors; exact agreement with zero error is 0,
/// disagreement with zero error is infinite.
pub fn sigma_deviation(diff: f64, std_error: f64) -> f64 {
    if std_error > 0.0 {
        diff / std_error
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    /// Every cell with a verdict passed.
    pub passed: bool,
    pub checked_cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_abs_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolation: Option<Extrapolation>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub artifact_version: String,
    pub master_seed: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    /// False when a trial failed and the run stopped early.
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub cells: Vec<Cell>,
    pub summary: Summary,
    pub meta: Meta,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    experiment: &'a str,
    label: &'a str,
    u_re: Option<f64>,
    u_im: Option<f64>,
    epsilon: Option<f64>,
    centers: String,
    r_lo: Option<f64>,
    r_hi: Option<f64>,
    value: f64,
    std_error: f64,
    trials: Option<u64>,
    hits: Option<u64>,
    prediction: Option<f64>,
    deviation: Option<f64>,
    passed: Option<bool>,
}

impl ResultRecord {
    pub fn is_complete(&self) -> bool {
        self.meta.complete
    }

    /// Fills the summary verdict from the cells.
    pub fn summarize(&mut self) {
        let judged: Vec<&Cell> = self.cells.iter().filter(|c| c.passed.is_some()).collect();
        self.summary.checked_cells = judged.len();
        self.summary.passed = self.meta.complete && judged.iter().all(|c| c.passed == Some(true));
        self.summary.max_abs_deviation =
            judged.iter().filter_map(|c| c.deviation).map(f64::abs).reduce(f64::max);
    }

    /// True when both records carry the same estimates (ignores timing).
    pub fn same_estimates(&self, other: &ResultRecord) -> bool {
        self.experiment == other.experiment && self.cells == other.cells
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records always serialize")
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn read_json(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(CsvRow {
                experiment: self.experiment.name(),
                label: &c.label,
                u_re: c.u.map(|u| u.re()),
                u_im: c.u.map(|u| u.im()),
                epsilon: c.epsilon,
                centers: c
                    .centers
                    .iter()
                    .map(|z| format!("{}{:+}i", z.re(), z.im()))
                    .collect::<Vec<_>>()
                    .join(" "),
                r_lo: c.r_lo,
                r_hi: c.r_hi,
                value: c.value,
                std_error: c.std_error,
                trials: c.trials,
                hits: c.hits,
                prediction: c.prediction,
                deviation: c.deviation.filter(|d| d.is_finite()),
                passed: c.passed,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_handles_zero_error() {
        assert_eq!(sigma_deviation(0.0, 0.0), 0.0);
        assert_eq!(sigma_deviation(-1.0, 0.0), f64::NEG_INFINITY);
        assert_eq!(sigma_deviation(1.0, 0.5), 2.0);
    }

    #[test]
    fn prediction_verdict() {
        assert_eq!(Cell::new("a", 1.0, 0.1).predicted(1.3).passed, Some(true));
        assert_eq!(Cell::new("a", 1.0, 0.1).predicted(1.5).passed, Some(false));
        assert_eq!(Cell::new("a", 1e-12, 0.0).within(1e-10).passed, Some(true));
    }
}
