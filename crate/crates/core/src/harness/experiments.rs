//! Dispatch from a validated [`ExperimentConfig`] to the estimators, and
//! the closed-form checks behind `verify-identities` and `roots-bench`.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig, ExperimentKind};
use super::record::{Cell, Meta, ResultRecord, Summary, ARTIFACT_VERSION};
use crate::coeffs::{sample_coefficients, splitmix64, CoefficientLaw, SeededStream};
use crate::hypgeom::{cross_covariance, kernel_determinant, q_covariance, DiskPoint};
use crate::pointproc::{
    clt_statistic_sample_with, correlation_limit_with, independence_experiment_with,
    intensity_profile_with, LawSource, PointProcError,
};
use crate::roots::{count_zeros_jittered, find_roots, RootConfig, RootError};
use crate::series::{
    alpha_coefficients, alpha_power_sum, certified_radius, direct_covariance_sum, direct_power_sum,
    TruncatedSeries, TruncationPolicy,
};

/// Geometric tail cut-off for the direct sums of the identity checks.
pub const IDENTITY_TAIL: f64 = 1e-13;
pub const Q_TOLERANCE: f64 = 1e-9;
pub const FOURTH_POWER_TOLERANCE: f64 = 1e-10;

/// Mean zero count of the Gaussian series in `|z| ≤ r`.
pub fn gaussian_mean_count(r: f64) -> f64 {
    r * r / (1.0 - r * r)
}

/// Gaussian first intensity averaged over the annulus `r_lo ≤ |z| ≤ r_hi`.
pub fn gaussian_annulus_intensity(r_lo: f64, r_hi: f64) -> f64 {
    (gaussian_mean_count(r_hi) - gaussian_mean_count(r_lo)) / (PI * (r_hi * r_hi - r_lo * r_lo))
}

/// Runs the configured experiment. Configuration problems are returned as
/// errors before any sampling; estimator failures produce a record marked
/// incomplete.
pub fn run(config: &ExperimentConfig) -> Result<ResultRecord, ConfigError> {
    config.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    let mut summary = Summary::default();
    log::info!("running {} (seed {})", config.experiment, config.master_seed);
    let outcome = match config.experiment {
        ExperimentKind::VerifyIdentities => {
            verify_identities(config, &mut cells);
            Ok(())
        }
        ExperimentKind::Clt => run_clt(config, &mut cells),
        ExperimentKind::Intensity => run_intensity(config, &mut cells),
        ExperimentKind::Correlations => run_correlations(config, &mut cells, &mut summary),
        ExperimentKind::Independence => run_independence(config, &mut cells, &mut summary),
        ExperimentKind::RootsBench => run_roots_bench(config, &mut cells, &mut summary),
    };
    let failure = outcome.err().map(|e| {
        log::error!("{} stopped: {e}", config.experiment);
        e.to_string()
    });
    let mut record = ResultRecord {
        experiment: config.experiment,
        config: config.clone(),
        cells,
        summary,
        meta: Meta {
            artifact_version: ARTIFACT_VERSION.into(),
            master_seed: config.master_seed,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            complete: failure.is_none(),
            failure,
        },
    };
    record.summarize();
    Ok(record)
}

fn law_of(config: &ExperimentConfig) -> CoefficientLaw {
    config.law().expect("validated")
}

fn source(config: &ExperimentConfig, cell: u64) -> LawSource {
    LawSource::keyed(law_of(config), config.master_seed, config.experiment.name(), cell)
}

fn unit_direction(z: DiskPoint) -> Complex64 {
    if z.norm() > 0.0 {
        z.to_complex() / z.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

fn verify_identities(config: &ExperimentConfig, cells: &mut Vec<Cell>) {
    let us = config.u_values();
    let zs = config.center_values();
    let lambdas = config.lambda_values();

    for &u in &us {
        let mut q_dev = 0.0f64;
        let mut cross_dev = 0.0f64;
        let mut fourth_dev = 0.0f64;
        for &z1 in &zs {
            for &z2 in &zs {
                let (direct, _) = direct_covariance_sum(u, z1, u, z2, IDENTITY_TAIL);
                q_dev = q_dev.max((direct - q_covariance(z1, z2)).norm());
                let v = -u;
                let (direct, _) = direct_covariance_sum(u, z1, v, z2, IDENTITY_TAIL);
                cross_dev = cross_dev.max((direct - cross_covariance(u, z1, v, z2)).norm());
            }
            let (direct, _) = direct_power_sum(u, z1, 4.0, IDENTITY_TAIL);
            fourth_dev = fourth_dev.max((direct - alpha_power_sum(u, z1, 4.0).expect("p = 4")).abs());
        }
        cells.push(Cell::new("q-invariance", q_dev, 0.0).at_u(u).within(Q_TOLERANCE));
        cells.push(Cell::new("cross-covariance", cross_dev, 0.0).at_u(u).within(Q_TOLERANCE));
        cells.push(Cell::new("fourth-power-sum", fourth_dev, 0.0).at_u(u).within(FOURTH_POWER_TOLERANCE));

        // Σ|α_k|² against Σ λ_i λ̄_j Q(z_i, z_j), truncated once every
        // geometric tail is below the cut-off.
        let degree = zs
            .iter()
            .map(|&z| direct_power_sum(u, z, 2.0, IDENTITY_TAIL).1)
            .max()
            .unwrap_or(0);
        let alphas = alpha_coefficients(u, &zs, &lambdas, degree).expect("validated lengths");
        let direct: f64 = alphas.iter().map(|a| a.norm_sqr()).sum();
        let mut closed = Complex64::new(0.0, 0.0);
        for (i, &zi) in zs.iter().enumerate() {
            for (j, &zj) in zs.iter().enumerate() {
                closed += lambdas[i] * lambdas[j].conj() * q_covariance(zi, zj);
            }
        }
        let scale = closed.norm().max(1.0);
        cells.push(
            Cell::new("alpha-square-sum", (direct - closed.re).abs() / scale, 0.0).at_u(u).within(Q_TOLERANCE),
        );
    }

    // Decay of Σ|α_k|⁴ along rays orthogonal to each point; towards the
    // point the sum is not monotone at small |u|.
    let mut radii: Vec<f64> = us.iter().map(|u| u.norm()).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    for &z in &zs {
        let dir = unit_direction(z) * Complex64::i();
        let values: Vec<f64> = radii
            .iter()
            .map(|&m| {
                let u = DiskPoint::from_complex(dir * m).expect("inside");
                alpha_power_sum(u, z, 4.0).expect("p = 4")
            })
            .collect();
        let monotone = values.windows(2).all(|w| w[1] < w[0]);
        let last = *values.last().expect("non-empty grid");
        let reaches_boundary = radii.last().is_some_and(|&m| m >= 0.999);
        let mut cell = Cell::new("fourth-power-decay", last, 0.0);
        cell.centers = vec![z];
        cell.passed = Some(monotone && (!reaches_boundary || last < 1e-2));
        cells.push(cell);
    }
}

fn run_clt(config: &ExperimentConfig, cells: &mut Vec<Cell>) -> Result<(), PointProcError> {
    let zs = config.center_values();
    let lambdas = config.lambda_values();
    let n = config.trials.expect("validated");
    let opts = config.mc_options();
    for (k, &u) in config.u_values().iter().enumerate() {
        let s = clt_statistic_sample_with(&source(config, k as u64), u, &zs, &lambdas, n, &opts)?;
        if let Some(ks) = s.ks_distance {
            // asymptotic 1% critical value of the one-sample KS statistic
            let critical = 1.628 / (n as f64).sqrt();
            let mut cell = Cell::new("ks-distance", ks, 0.0).at_u(u).with_counts(n, None);
            cell.centers = zs.clone();
            cell.prediction = Some(critical);
            cell.passed = Some(ks <= critical);
            cells.push(cell);
        }
        let se = s.sigma2 * (2.0 / (n as f64 - 1.0)).sqrt();
        let mut cell = Cell::new("variance", s.empirical_variance, se).at_u(u).with_counts(n, None);
        cell.centers = zs.clone();
        cells.push(cell.predicted(s.sigma2));
        let mut cell = Cell::new("mean", s.empirical_mean, (s.sigma2 / n as f64).sqrt()).at_u(u);
        cell.centers = zs.clone();
        cells.push(cell.predicted(0.0));
    }
    Ok(())
}

fn run_intensity(config: &ExperimentConfig, cells: &mut Vec<Cell>) -> Result<(), PointProcError> {
    let trials = config.trials.expect("validated");
    let radius = config.search_radius();
    let opts = config.mc_options();
    for (k, &u) in config.u_values().iter().enumerate() {
        let p = intensity_profile_with(&source(config, k as u64), u, radius, config.bins, trials, &opts)?;
        for b in &p.radial_bins {
            let mut cell = Cell::new("intensity", b.expected_count_per_area, b.std_error)
                .at_u(u)
                .with_counts(trials, None);
            cell.r_lo = Some(b.r_lo);
            cell.r_hi = Some(b.r_hi);
            cells.push(cell.predicted(gaussian_annulus_intensity(b.r_lo, b.r_hi)));
        }
        let mut cell = Cell::new("mean-count", p.total_count, p.total_std_error).at_u(u).with_counts(trials, None);
        cell.r_lo = Some(0.0);
        cell.r_hi = Some(radius);
        cells.push(cell.predicted(gaussian_mean_count(radius)));
    }
    Ok(())
}

fn run_correlations(
    config: &ExperimentConfig,
    cells: &mut Vec<Cell>,
    summary: &mut Summary,
) -> Result<(), PointProcError> {
    let centers = config.center_values();
    let prediction = kernel_determinant(&centers, 1.0)?;
    let report = correlation_limit_with(
        source(config, 0),
        &config.u_values(),
        &config.epsilons,
        &centers,
        config.trials.expect("validated"),
        &config.mc_options(),
    )?;
    for c in &report.cells {
        cells.push(
            Cell::new("scaled-hit-probability", c.scaled, c.scaled_std_error)
                .at_u(c.u)
                .with_balls(&centers, c.epsilon)
                .with_counts(c.estimate.trials, Some(c.estimate.hits))
                .predicted(prediction),
        );
    }
    if let Some(e) = report.extrapolation {
        let mut cell = Cell::new("extrapolated-limit", e.intercept, e.combined_error).at_u(e.u);
        cell.centers = centers.clone();
        cells.push(cell.predicted(prediction));
        summary.extrapolation = Some(e);
    }
    summary.notes.insert("kernel_determinant".into(), prediction);
    Ok(())
}

fn run_independence(
    config: &ExperimentConfig,
    cells: &mut Vec<Cell>,
    summary: &mut Summary,
) -> Result<(), PointProcError> {
    let us = config.u_values();
    let (u1, u2) = (us[0], us[1]);
    let center = config.center_values()[0];
    let eps = config.epsilons[0];
    let trials = config.trials.expect("validated");
    let r = independence_experiment_with(&source(config, 0), u1, u2, center, eps, trials, &config.mc_options())?;
    let target = if u1 == u2 { 1.0 } else { 0.0 };
    let se = if u1 == u2 { 0.0 } else { r.correlation_std_error };
    cells.push(
        Cell::new("indicator-correlation", r.indicator_correlation, se)
            .with_balls(&[center], eps)
            .with_counts(trials, Some(r.hits_both))
            .predicted(target),
    );
    let [se_re, se_im] = r.field_covariance_std_error;
    cells.push(
        Cell::new("field-covariance-re", r.field_covariance.re, se_re)
            .with_balls(&[center], eps)
            .predicted(r.field_covariance_closed_form.re),
    );
    cells.push(
        Cell::new("field-covariance-im", r.field_covariance.im, se_im)
            .with_balls(&[center], eps)
            .predicted(r.field_covariance_closed_form.im),
    );
    summary.notes.insert("pseudo_hyperbolic_distance".into(), r.pseudo_hyperbolic_distance);
    summary.notes.insert("hits_first".into(), r.hits_first as f64);
    summary.notes.insert("hits_second".into(), r.hits_second as f64);
    summary.notes.insert("indicator_covariance".into(), r.indicator_covariance);
    summary.notes.insert("field_cross_covariance_abs".into(), r.field_covariance_closed_form.norm());
    Ok(())
}

/// Outcome of the root-finder certificate benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootsBenchReport {
    pub instances: u64,
    /// Largest `residual / (tolerance · coefficient_scale)` over all zeros.
    pub max_residual_ratio: f64,
    pub balls_tested: u64,
    /// Balls where the root count and the contour count differ.
    pub count_mismatches: u64,
    /// Largest distance between computed and exact roots of `zⁿ − a`.
    pub structured_max_error: f64,
}

/// Random Gaussian polynomials of degree in `degrees` (inclusive), each
/// solved on its certified disk; every reported zero must meet the residual
/// certificate and four random balls per instance must get identical
/// counts from the roots and from the argument principle. Adds `zⁿ − a`
/// checks against exact roots.
pub fn roots_benchmark(
    instances: u64,
    degrees: [usize; 2],
    seed: u64,
    config: &RootConfig,
    policy: &TruncationPolicy,
) -> Result<RootsBenchReport, RootError> {
    let mut max_ratio = 0.0f64;
    let mut balls = 0;
    let mut mismatches = 0;
    for i in 0..instances {
        let stream = SeededStream::for_trial(seed, "roots-bench", 0, i);
        let key = splitmix64(stream.stream_index);
        let degree = degrees[0] + (key % (degrees[1] - degrees[0] + 1) as u64) as usize;
        let coeffs = sample_coefficients(CoefficientLaw::ComplexGaussian, degree + 1, stream);
        let radius = certified_radius(degree, policy).min(0.999);
        let series = TruncatedSeries::from_coefficients(coeffs, radius)?;
        let zs = find_roots(&series, radius, config)?;
        for z in &zs.zeros {
            max_ratio = max_ratio.max(z.residual / (config.residual_tolerance * zs.coefficient_scale));
        }
        for b in 0..4u64 {
            let bits = splitmix64(key ^ splitmix64(b + 1));
            let unit = |shift: u32| ((bits >> shift) & 0xffff) as f64 / 65535.0;
            let center_mod = 0.6 * radius * unit(0);
            let center = DiskPoint::from_complex(Complex64::from_polar(center_mod, TAU * unit(16))).expect("inside");
            let r = (0.05 + 0.9 * unit(32)) * (0.95 * radius - center_mod);
            let bc = count_zeros_jittered(&series, center, r, None, config, bits)?;
            balls += 1;
            if bc.count != zs.count_in_ball(center.to_complex(), bc.radius) {
                mismatches += 1;
                log::warn!("instance {i} ball {b}: count mismatch");
            }
        }
    }

    let mut structured = 0.0f64;
    for n in [2usize, 3, 5, 8, 13, 21] {
        let a = Complex64::from_polar(0.5f64.powi(n as i32), 0.3 * n as f64);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
        coeffs[0] = -a;
        coeffs[n] = Complex64::new(1.0, 0.0);
        let series = TruncatedSeries::from_coefficients(coeffs, 0.9)?;
        let zs = find_roots(&series, 0.9, config)?;
        if zs.count() != n {
            structured = f64::INFINITY;
            continue;
        }
        for k in 0..n {
            let exact = Complex64::from_polar(0.5, (0.3 * n as f64 + TAU * k as f64) / n as f64);
            let nearest =
                zs.zeros.iter().map(|z| (z.location.to_complex() - exact).norm()).fold(f64::INFINITY, f64::min);
            structured = structured.max(nearest);
        }
    }
    Ok(RootsBenchReport {
        instances,
        max_residual_ratio: max_ratio,
        balls_tested: balls,
        count_mismatches: mismatches,
        structured_max_error: structured,
    })
}

fn run_roots_bench(
    config: &ExperimentConfig,
    cells: &mut Vec<Cell>,
    summary: &mut Summary,
) -> Result<(), PointProcError> {
    let opts = config.mc_options();
    let policy = opts.policy(0.5);
    let instances = config.trials.expect("validated");
    let r = roots_benchmark(instances, config.degree_bounds(), config.master_seed, &opts.roots, &policy)
        .map_err(|e| PointProcError::TrialFailed {
            trial: 0,
            seed: config.master_seed,
            stream_index: 0,
            source: e,
        })?;
    cells.push(Cell::new("max-residual-ratio", r.max_residual_ratio, 0.0).with_counts(instances, None));
    let last = cells.last_mut().expect("pushed");
    last.passed = Some(r.max_residual_ratio <= 1.0);
    cells.push(
        Cell::new("count-mismatches", r.count_mismatches as f64, 0.0)
            .with_counts(r.balls_tested, None)
            .within(0.0),
    );
    cells.push(Cell::new("structured-max-error", r.structured_max_error, 0.0).within(1e-10));
    summary.notes.insert("balls_tested".into(), r.balls_tested as f64);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_count_formula() {
        assert!((gaussian_mean_count(0.5) - 1.0 / 3.0).abs() < 1e-15);
        // small annulus at the origin approaches 1/π
        assert!((gaussian_annulus_intensity(0.0, 1e-4) * PI - 1.0).abs() < 1e-7);
    }

    #[test]
    fn default_identity_run_passes() {
        let rec = run(&ExperimentConfig::new(ExperimentKind::VerifyIdentities)).unwrap();
        assert!(rec.is_complete());
        assert!(rec.summary.passed, "{:#?}", rec.cells);
        assert!(rec.cells.iter().any(|c| c.label == "q-invariance"));
        assert!(rec.summary.max_abs_deviation.unwrap() < 1e-9);
    }

    #[test]
    fn small_roots_bench() {
        let r = roots_benchmark(5, [20, 60], 3, &RootConfig::default(), &TruncationPolicy::new(0.5)).unwrap();
        assert_eq!(r.count_mismatches, 0);
        assert!(r.max_residual_ratio <= 1.0);
        assert!(r.structured_max_error < 1e-10);
    }
}
