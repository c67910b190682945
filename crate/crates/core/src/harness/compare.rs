//! Cell-by-cell comparison of a record against a kernel-determinant
//! prediction or a baseline record, under the 4σ policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ExperimentKind;
use super::record::{sigma_deviation, ResultRecord, PASS_SIGMAS};
use crate::hypgeom::{kernel_determinant, GeometryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub enum Prediction<'a> {
    /// `det[c/(1 − z_i z̄_j)²]` per cell, for `correlations` records.
    KernelDeterminant { calibration: f64 },
    /// Another record with the same cell geometry.
    Baseline(&'a ResultRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub label: String,
    pub value: f64,
    pub std_error: f64,
    pub prediction: f64,
    pub prediction_std_error: f64,
    pub deviation_sigmas: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub threshold_sigmas: f64,
    pub cells: Vec<CellComparison>,
    pub passed: bool,
}

pub fn compare(record: &ResultRecord, prediction: &Prediction) -> Result<ComparisonReport, CompareError> {
    let mut cells = Vec::new();
    match prediction {
        Prediction::KernelDeterminant { calibration } => {
            if record.experiment != ExperimentKind::Correlations {
                return Err(CompareError::GeometryMismatch(format!(
                    "kernel predictions need a correlations record, got {}",
                    record.experiment
                )));
            }
            for c in record.cells.iter().filter(|c| !c.centers.is_empty()) {
                let pred = kernel_determinant(&c.centers, *calibration)?;
                cells.push(judge(&c.label, c.value, c.std_error, pred, 0.0));
            }
        }
        Prediction::Baseline(base) => {
            if base.experiment != record.experiment {
                return Err(CompareError::GeometryMismatch(format!(
                    "{} record against {} baseline",
                    record.experiment, base.experiment
                )));
            }
            if base.cells.len() != record.cells.len() {
                return Err(CompareError::GeometryMismatch(format!(
                    "{} cells against {} baseline cells",
                    record.cells.len(),
                    base.cells.len()
                )));
            }
            for (c, b) in record.cells.iter().zip(&base.cells) {
                if c.key() != b.key() {
                    return Err(CompareError::GeometryMismatch(format!(
                        "cell `{}` does not match baseline cell `{}`",
                        c.label, b.label
                    )));
                }
                cells.push(judge(&c.label, c.value, c.std_error, b.value, b.std_error));
            }
        }
    }
    let passed = !cells.is_empty() && cells.iter().all(|c| c.passed);
    Ok(ComparisonReport { threshold_sigmas: PASS_SIGMAS, cells, passed })
}

fn judge(label: &str, value: f64, se: f64, prediction: f64, pred_se: f64) -> CellComparison {
    let dev = sigma_deviation(value - prediction, se.hypot(pred_se));
    CellComparison {
        label: label.into(),
        value,
        std_error: se,
        prediction,
        prediction_std_error: pred_se,
        deviation_sigmas: dev,
        passed: dev.abs() <= PASS_SIGMAS,
    }
}
