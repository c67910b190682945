//! Experiment configuration: a TOML file plus CLI overrides, validated in
//! full before any sampling starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::coeffs::CoefficientLaw;
use crate::hypgeom::DiskPoint;
use crate::pointproc::{BallFamily, McOptions};
use crate::roots::{RootConfig, MAX_JITTER};
use crate::series::{required_degree, DEFAULT_SAFETY_FACTOR, DEFAULT_TAIL_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyIdentities,
    Clt,
    Intensity,
    Correlations,
    Independence,
    RootsBench,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::VerifyIdentities => "verify-identities",
            ExperimentKind::Clt => "clt",
            ExperimentKind::Intensity => "intensity",
            ExperimentKind::Correlations => "correlations",
            ExperimentKind::Independence => "independence",
            ExperimentKind::RootsBench => "roots-bench",
        }
    }

    fn needs_trials(&self) -> bool {
        !matches!(self, ExperimentKind::VerifyIdentities)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_nodes: Option<usize>,
}

/// Accepts either a real number or an `[re, im]` pair per point.
fn points<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DiskPoint>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Real(f64),
        Pair([f64; 2]),
    }
    let raw: Vec<Repr> = Vec::deserialize(d)?;
    raw.into_iter()
        .map(|r| {
            let [re, im] = match r {
                Repr::Real(x) => [x, 0.0],
                Repr::Pair(p) => p,
            };
            DiskPoint::new(re, im).map_err(serde::de::Error::custom)
        })
        .collect()
}

pub const DEFAULT_IDENTITY_GRID: [f64; 5] = [0.0, 0.5, 0.9, 0.99, 0.999];
pub const DEFAULT_DEGREE_RANGE: [usize; 2] = [20, 200];

fn default_law() -> String {
    "gaussian".into()
}

fn default_bins() -> usize {
    5
}

fn is_default_bins(b: &usize) -> bool {
    *b == default_bins()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_law")]
    pub law: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub law_params: BTreeMap<String, f64>,
    #[serde(default, deserialize_with = "points", skip_serializing_if = "Vec::is_empty")]
    pub u: Vec<DiskPoint>,
    #[serde(default, deserialize_with = "points", skip_serializing_if = "Vec::is_empty")]
    pub centers: Vec<DiskPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    /// Weights of the linear statistic, as `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default = "default_bins", skip_serializing_if = "is_default_bins")]
    pub bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Inclusive degree range of the random polynomials in `roots-bench`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree_range: Option<[usize; 2]>,
    #[serde(default)]
    pub truncation: TruncationOverrides,
    #[serde(default)]
    pub roots: RootOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            law: default_law(),
            law_params: BTreeMap::new(),
            u: Vec::new(),
            centers: Vec::new(),
            epsilons: Vec::new(),
            lambdas: Vec::new(),
            radius: None,
            bins: default_bins(),
            trials: None,
            master_seed: 0,
            degree_range: None,
            truncation: TruncationOverrides::default(),
            roots: RootOverrides::default(),
            output: None,
            csv: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.into(), message: e.to_string() })?;
        Self::from_toml_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })
    }

    pub fn law(&self) -> Result<CoefficientLaw, FieldError> {
        CoefficientLaw::from_spec(&self.law, self.law_params.iter().map(|(k, &v)| (k.as_str(), v)))
            .map_err(|e| FieldError { field: "law".into(), message: e.to_string() })
    }

    pub fn mc_options(&self) -> McOptions {
        let d = RootConfig::default();
        McOptions {
            tail_tolerance: self.truncation.tail_tolerance.unwrap_or(DEFAULT_TAIL_TOLERANCE),
            safety_factor: self.truncation.safety_factor.unwrap_or(DEFAULT_SAFETY_FACTOR),
            roots: RootConfig {
                residual_tolerance: self.roots.residual_tolerance.unwrap_or(d.residual_tolerance),
                max_iterations: self.roots.max_iterations.unwrap_or(d.max_iterations),
                quadrature_nodes: self.roots.quadrature_nodes.unwrap_or(d.quadrature_nodes),
            },
        }
    }

    /// `u` values, with the experiment's default when none are given.
    pub fn u_values(&self) -> Vec<DiskPoint> {
        if !self.u.is_empty() {
            return self.u.clone();
        }
        match self.experiment {
            ExperimentKind::VerifyIdentities => {
                DEFAULT_IDENTITY_GRID.iter().map(|&m| DiskPoint::real(m).expect("inside")).collect()
            }
            _ => vec![DiskPoint::ORIGIN],
        }
    }

    pub fn center_values(&self) -> Vec<DiskPoint> {
        if !self.centers.is_empty() || self.experiment != ExperimentKind::VerifyIdentities {
            return self.centers.clone();
        }
        vec![DiskPoint::real(0.3).expect("inside"), DiskPoint::new(-0.2, 0.4).expect("inside")]
    }

    /// Statistic weights; all ones for `clt`, `(1, i)` for the identity
    /// checks when not given.
    pub fn lambda_values(&self) -> Vec<Complex64> {
        if !self.lambdas.is_empty() {
            return self.lambdas.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        }
        let n = self.center_values().len();
        match self.experiment {
            ExperimentKind::VerifyIdentities => {
                (0..n).map(|k| Complex64::i().powu(k as u32)).collect()
            }
            _ => vec![Complex64::new(1.0, 0.0); n],
        }
    }

    pub fn search_radius(&self) -> f64 {
        self.radius.unwrap_or(0.5)
    }

    pub fn degree_bounds(&self) -> [usize; 2] {
        self.degree_range.unwrap_or(DEFAULT_DEGREE_RANGE)
    }

    /// Checks every field against the preconditions of the target
    /// experiment and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut err = |field: &str, message: String| errs.push(FieldError { field: field.into(), message });

        if let Err(e) = self.law() {
            err(&e.field, e.message);
        }
        let opts = self.mc_options();
        if let Err(e) = opts.policy(0.5).validate() {
            err("truncation", e.to_string());
        }
        if let Err(e) = opts.roots.validate() {
            err("roots", e.to_string());
        }
        match self.trials {
            Some(0) => err("trials", "must be at least 1".into()),
            None if self.experiment.needs_trials() => {
                err("trials", format!("required for `{}`", self.experiment))
            }
            _ => {}
        }
        if self.bins == 0 {
            err("bins", "must be at least 1".into());
        }
        let lambdas = self.lambda_values();
        let centers = self.center_values();
        let us = self.u_values();

        match self.experiment {
            ExperimentKind::VerifyIdentities => {
                if centers.is_empty() {
                    err("centers", "need at least one point".into());
                }
                if lambdas.len() != centers.len() {
                    err("lambdas", format!("{} weights for {} centers", lambdas.len(), centers.len()));
                }
            }
            ExperimentKind::Clt => {
                if centers.is_empty() {
                    err("centers", "need at least one point".into());
                }
                if lambdas.len() != centers.len() {
                    err("lambdas", format!("{} weights for {} centers", lambdas.len(), centers.len()));
                }
                if let Some(t) = self.trials {
                    if t < 1000 {
                        err("trials", format!("clt needs at least 1000 samples, got {t}"));
                    }
                }
            }
            ExperimentKind::Intensity => {
                let r = self.search_radius();
                if !(r > 0.0 && r * (1.0 + MAX_JITTER) < 1.0) {
                    err("radius", format!("must lie in (0, {:.4}), got {r}", 1.0 / (1.0 + MAX_JITTER)));
                } else if self.bins > 0 && 1.0 / self.bins as f64 <= 2.0 * MAX_JITTER {
                    err("bins", format!("at most {} bins", (0.5 / MAX_JITTER).ceil() as usize - 1));
                }
            }
            ExperimentKind::Correlations => {
                if centers.is_empty() {
                    err("centers", "need at least one ball center".into());
                }
                if self.epsilons.is_empty() {
                    err("epsilons", "need at least one ball radius".into());
                }
                if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
                    err("epsilons", "must be strictly decreasing".into());
                }
                if us.windows(2).any(|w| !(w[1].norm() > w[0].norm())) {
                    err("u", "|u| must be strictly increasing".into());
                }
                for &eps in &self.epsilons {
                    if let Err(e) = BallFamily::new(centers.clone(), eps) {
                        err("epsilons", e.to_string());
                    }
                }
            }
            ExperimentKind::Independence => {
                if us.len() != 2 {
                    err("u", format!("need exactly two parameters, got {}", us.len()));
                }
                if centers.len() != 1 {
                    err("centers", format!("need exactly one ball center, got {}", centers.len()));
                }
                if self.epsilons.len() != 1 {
                    err("epsilons", format!("need exactly one ball radius, got {}", self.epsilons.len()));
                }
                if let (Some(&c), Some(&eps)) = (centers.first(), self.epsilons.first()) {
                    if let Err(e) = BallFamily::new(vec![c], eps) {
                        err("epsilons", e.to_string());
                    }
                }
                if self.trials == Some(1) {
                    err("trials", "need at least 2 trials".into());
                }
            }
            ExperimentKind::RootsBench => {
                let [lo, hi] = self.degree_bounds();
                if lo < 1 || hi < lo {
                    err("degree_range", format!("need 1 <= min <= max, got [{lo}, {hi}]"));
                }
            }
        }
        // Truncation must be feasible for the largest image radius in play.
        if matches!(self.experiment, ExperimentKind::Correlations | ExperimentKind::Independence) {
            for &u in &us {
                for &c in &centers {
                    for &eps in &self.epsilons {
                        let reach = crate::hypgeom::image_max_modulus(u, c, eps * (1.0 + MAX_JITTER));
                        if reach >= 1.0 || required_degree(&opts.policy(reach)).is_err() {
                            err("u", format!("ball images at |u| = {} cannot be certified", u.norm()));
                        }
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_real_and_complex_points() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            experiment = "correlations"
            law = "sparse"
            law_params = { p = 0.2 }
            u = [0.5, [0.0, 0.9]]
            centers = [[-0.4, 0.0], 0.4]
            epsilons = [0.2, 0.1]
            trials = 100
            master_seed = 7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.u[1], DiskPoint::new(0.0, 0.9).unwrap());
        assert_eq!(cfg.centers[1], DiskPoint::real(0.4).unwrap());
        assert_eq!(cfg.law().unwrap(), CoefficientLaw::SparseThreePoint { p: 0.2 });
        cfg.validate().unwrap();
    }

    #[test]
    fn missing_trials_is_invalid() {
        let cfg = ExperimentConfig::new(ExperimentKind::Intensity);
        match cfg.validate() {
            Err(ConfigError::Invalid(errs)) => assert!(errs.iter().any(|e| e.field == "trials")),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::new(ExperimentKind::VerifyIdentities).validate().is_ok());
    }

    #[test]
    fn reports_every_bad_field() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Correlations);
        cfg.law = "cauchy".into();
        cfg.trials = Some(0);
        cfg.centers = vec![DiskPoint::ORIGIN, DiskPoint::real(0.1).unwrap()];
        cfg.epsilons = vec![0.1, 0.2];
        let Err(ConfigError::Invalid(errs)) = cfg.validate() else { panic!() };
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"law") && fields.contains(&"trials") && fields.contains(&"epsilons"));
    }

    #[test]
    fn out_of_disk_point_is_a_parse_error() {
        assert!(ExperimentConfig::from_toml_str("experiment = \"clt\"\nu = [1.5]").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"clt\"\nbogus = 1").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Independence);
        cfg.u = vec![DiskPoint::real(0.9).unwrap(), DiskPoint::real(-0.9).unwrap()];
        cfg.centers = vec![DiskPoint::ORIGIN];
        cfg.epsilons = vec![0.2];
        cfg.trials = Some(10);
        cfg.roots.quadrature_nodes = Some(64);
        cfg.output = Some("out.json".into());
        let text = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml_string(), text);
    }
}
