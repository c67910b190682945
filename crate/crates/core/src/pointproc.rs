//! Monte Carlo estimators for zero statistics of pushed-forward series:
//! joint ball-hit probabilities and their ε^{-2n} scaling limit, radial
//! first intensity, the CLT for real linear statistics, and
//! two-parameter independence.
//!
//! Every trial draws its own coefficient stream `(seed, trial)`, so trials
//! can run in any order on any number of threads. Aggregates are integer
//! counts or sums taken over trial-ordered vectors, which keeps results
//! identical across thread counts.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::{fnv1a, splitmix64, CoefficientLaw, SeededStream};
use crate::hypgeom::{
    cross_covariance, image_max_modulus, mobius, mobius_inverse, pseudo_hyperbolic_distance,
    q_covariance, DiskPoint, GeometryError,
};
use crate::roots::{
    count_jittered_with, find_roots, RootConfig, RootError, RootMethod, MAX_JITTER,
};
use crate::series::{
    required_degree, MultiHorner, SeriesError, TruncatedSeries, TruncationPolicy,
    DEFAULT_SAFETY_FACTOR, DEFAULT_TAIL_TOLERANCE,
};

/// Cells of a correlation grid need at least this many hits.
pub const MIN_CELL_HITS: u64 = 25;

/// Above this truncation degree, radial profiles are counted on circles
/// instead of extracting all roots.
pub const GLOBAL_ROOTS_MAX_DEGREE: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointProcError {
    #[error("invalid ball family: {0}")]
    InvalidBalls(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cell (|u| = {u_abs}, epsilon = {epsilon}) has only {hits} hits (need {MIN_CELL_HITS})")]
    InsufficientHits { u_abs: f64, epsilon: f64, hits: u64 },
    #[error("trial {trial} (seed {seed}, stream {stream_index}) failed: {source}")]
    TrialFailed {
        trial: u64,
        seed: u64,
        stream_index: u64,
        #[source]
        source: RootError,
    },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Truncation and root-finding settings shared by all estimators. The
/// truncation radius itself is derived from the geometry of each call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub tail_tolerance: f64,
    pub safety_factor: f64,
    pub roots: RootConfig,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            safety_factor: DEFAULT_SAFETY_FACTOR,
            roots: RootConfig::default(),
        }
    }
}

impl McOptions {
    pub fn policy(&self, radius: f64) -> TruncationPolicy {
        TruncationPolicy {
            target_radius: radius,
            tail_tolerance: self.tail_tolerance,
            safety_factor: self.safety_factor,
        }
    }
}

/// Produces the series for one trial.
pub trait SeriesSource: Sync {
    fn series(&self, trial: u64, policy: &TruncationPolicy) -> Result<TruncatedSeries, SeriesError>;

    fn stream(&self, trial: u64) -> SeededStream;

    fn label(&self) -> String;
}

/// I.i.d. draws from a coefficient law. Trial `t` uses the stream indexed
/// by `(experiment, cell, t)` under `seed`, so every grid cell and trial is
/// reproducible in isolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawSource {
    pub law: CoefficientLaw,
    pub seed: u64,
    pub experiment: u64,
    pub cell: u64,
}

impl LawSource {
    pub fn new(law: CoefficientLaw, seed: u64) -> Self {
        LawSource { law, seed, experiment: 0, cell: 0 }
    }

    pub fn keyed(law: CoefficientLaw, seed: u64, experiment: &str, cell: u64) -> Self {
        LawSource { law, seed, experiment: fnv1a(experiment.as_bytes()), cell }
    }

    pub fn with_cell(self, cell: u64) -> Self {
        LawSource { cell, ..self }
    }
}

impl SeriesSource for LawSource {
    fn series(&self, trial: u64, policy: &TruncationPolicy) -> Result<TruncatedSeries, SeriesError> {
        TruncatedSeries::sample(self.law, policy, self.stream(trial))
    }

    fn stream(&self, trial: u64) -> SeededStream {
        SeededStream {
            master_seed: self.seed,
            stream_index: splitmix64(self.experiment ^ splitmix64(self.cell ^ splitmix64(trial))),
        }
    }

    fn label(&self) -> String {
        self.law.to_string()
    }
}

/// Pairwise disjoint open balls `U(z_i, ε)` inside the disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    centers: Vec<DiskPoint>,
    epsilon: f64,
}

impl BallFamily {
    pub fn new(centers: Vec<DiskPoint>, epsilon: f64) -> Result<Self, PointProcError> {
        if centers.is_empty() {
            return Err(PointProcError::InvalidBalls("no centers".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(PointProcError::InvalidBalls(format!("epsilon must be positive, got {epsilon}")));
        }
        for (i, c) in centers.iter().enumerate() {
            if c.norm() + epsilon >= 1.0 {
                return Err(PointProcError::InvalidBalls(format!(
                    "ball {i} of radius {epsilon} around {c:?} leaves the disk"
                )));
            }
            for (j, d) in centers.iter().enumerate().skip(i + 1) {
                if (c.to_complex() - d.to_complex()).norm() <= 2.0 * epsilon {
                    return Err(PointProcError::InvalidBalls(format!(
                        "balls {i} and {j} overlap at epsilon = {epsilon}"
                    )));
                }
            }
        }
        Ok(BallFamily { centers, epsilon })
    }

    pub fn centers(&self) -> &[DiskPoint] {
        &self.centers
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub law: String,
    pub u: DiskPoint,
    pub epsilon: f64,
    pub centers: Vec<DiskPoint>,
    pub seed: u64,
    pub truncation_degree: usize,
}

/// Indicator average with its binomial standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
    pub hits: u64,
    pub params: EstimateParams,
}

pub fn binomial_std_error(hits: u64, trials: u64) -> f64 {
    let p = hits as f64 / trials as f64;
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn trial_failure(source: &dyn SeriesSource, trial: u64, err: RootError) -> PointProcError {
    let stream = source.stream(trial);
    PointProcError::TrialFailed {
        trial,
        seed: stream.master_seed,
        stream_index: stream.stream_index,
        source: err,
    }
}

/// Runs `f` for every trial and returns the results in trial order.
fn run_trials<T, F>(trials: u64, f: F) -> Result<Vec<T>, PointProcError>
where
    T: Send,
    F: Fn(u64, &mut MultiHorner) -> Result<T, PointProcError> + Sync + Send,
{
    (0..trials).into_par_iter().map_init(MultiHorner::default, |h, t| f(t, h)).collect()
}

/// Radius of the smallest origin-centered disk holding the `Φ(u, ·)`
/// images of every ball, including the jitter margin.
fn certified_reach(u: DiskPoint, centers: &[DiskPoint], epsilon: f64) -> Result<f64, PointProcError> {
    let reach = centers
        .iter()
        .map(|&c| {
            let r = (epsilon * (1.0 + MAX_JITTER)).min(0.5 * (1.0 - c.norm()) + 0.5 * epsilon);
            image_max_modulus(u, c, r)
        })
        .fold(0.0, f64::max);
    if reach < 1.0 {
        Ok(reach)
    } else {
        Err(PointProcError::InvalidArgument(format!("ball images reach the unit circle (|w| = {reach})")))
    }
}

fn ball_key(trial: u64, ball: usize) -> u64 {
    splitmix64(trial ^ splitmix64(ball as u64 + 1))
}

/// Probability that every ball contains a zero of `z ↦ f(X, Φ(u, z))`.
pub fn joint_hit_probability(
    law: CoefficientLaw,
    u: DiskPoint,
    balls: &BallFamily,
    trials: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<CorrelationEstimate, PointProcError> {
    joint_hit_probability_with(&LawSource::new(law, seed), u, balls, trials, opts)
}

/// [`joint_hit_probability`] for an arbitrary series source.
pub fn joint_hit_probability_with<S: SeriesSource>(
    source: &S,
    u: DiskPoint,
    balls: &BallFamily,
    trials: u64,
    opts: &McOptions,
) -> Result<CorrelationEstimate, PointProcError> {
    if trials == 0 {
        return Err(PointProcError::InvalidArgument("trials must be at least 1".into()));
    }
    let eps = balls.epsilon();
    let policy = opts.policy(certified_reach(u, balls.centers(), eps)?);
    let degree = required_degree(&policy)?;
    // Cheapest balls first: most trials stop at the first empty ball.
    let mut order: Vec<(usize, f64)> = balls
        .centers()
        .iter()
        .enumerate()
        .map(|(i, &c)| (i, image_max_modulus(u, c, eps)))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1));

    let hits = run_trials(trials, |t, horner| {
        let series = source.series(t, &policy)?;
        for &(i, _) in &order {
            let bc = count_jittered_with(
                &series,
                balls.centers()[i],
                eps,
                Some(u),
                &opts.roots,
                ball_key(t, i),
                horner,
            )
            .map_err(|e| trial_failure(source, t, e))?;
            if bc.count == 0 {
                return Ok(false);
            }
        }
        Ok(true)
    })?
    .into_iter()
    .filter(|&h| h)
    .count() as u64;

    Ok(CorrelationEstimate {
        value: hits as f64 / trials as f64,
        std_error: binomial_std_error(hits, trials),
        trials,
        hits,
        params: EstimateParams {
            law: source.label(),
            u,
            epsilon: eps,
            centers: balls.centers().to_vec(),
            seed: source.stream(0).master_seed,
            truncation_degree: degree,
        },
    })
}

/// One `(u, ε)` cell of a correlation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCell {
    pub u: DiskPoint,
    pub epsilon: f64,
    pub estimate: CorrelationEstimate,
    /// `ε^{-2n} p̂`.
    pub scaled: f64,
    pub scaled_std_error: f64,
}

/// Weighted linear fit of `ε^{-2n} p̂` against `ε²` at a fixed `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub u: DiskPoint,
    pub intercept: f64,
    pub slope: f64,
    pub statistical_error: f64,
    /// `|slope| ε_min²`: size of the correction applied beyond the
    /// smallest measured ε.
    pub extrapolation_error: f64,
    pub combined_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLimitReport {
    pub n: usize,
    pub centers: Vec<DiskPoint>,
    pub cells: Vec<LimitCell>,
    pub extrapolation: Option<Extrapolation>,
}

impl CorrelationLimitReport {
    /// Extrapolated value and error, or the single cell when the grid has
    /// one ε.
    pub fn limit(&self) -> (f64, f64) {
        match &self.extrapolation {
            Some(e) => (e.intercept, e.combined_error),
            None => {
                let last = self.cells.last().expect("non-empty grid");
                (last.scaled, last.scaled_std_error)
            }
        }
    }
}

/// Weighted least squares `y = a + b x`; returns `(a, b, se(a))`.
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], std_errors: &[f64]) -> (f64, f64, f64) {
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &y), &se) in xs.iter().zip(ys).zip(std_errors) {
        let w = 1.0 / se.max(1e-300).powi(2);
        s += w;
        sx += w * x;
        sxx += w * x * x;
        sy += w * y;
        sxy += w * x * y;
    }
    let d = s * sxx - sx * sx;
    let a = (sxx * sy - sx * sxy) / d;
    let b = (s * sxy - sx * sy) / d;
    (a, b, (sxx / d).sqrt())
}

/// Grid of `ε^{-2n} p̂` over `(u, ε)` with a linear-in-ε² extrapolation
/// to `ε → 0` at the largest `|u|`.
pub fn correlation_limit(
    law: CoefficientLaw,
    u_sequence: &[DiskPoint],
    epsilons: &[f64],
    centers: &[DiskPoint],
    trials: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<CorrelationLimitReport, PointProcError> {
    correlation_limit_with(LawSource::new(law, seed), u_sequence, epsilons, centers, trials, opts)
}

/// [`correlation_limit`] with cell `k` of the row-major `(u, ε)` grid
/// drawn from `source.with_cell(k)`.
pub fn correlation_limit_with(
    source: LawSource,
    u_sequence: &[DiskPoint],
    epsilons: &[f64],
    centers: &[DiskPoint],
    trials: u64,
    opts: &McOptions,
) -> Result<CorrelationLimitReport, PointProcError> {
    if u_sequence.is_empty() || epsilons.is_empty() {
        return Err(PointProcError::InvalidArgument("empty (u, epsilon) grid".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(PointProcError::InvalidArgument("epsilons must be strictly decreasing".into()));
    }
    if u_sequence.windows(2).any(|w| !(w[1].norm() > w[0].norm())) {
        return Err(PointProcError::InvalidArgument("|u| must be strictly increasing".into()));
    }
    let n = centers.len();
    let mut cells = Vec::with_capacity(u_sequence.len() * epsilons.len());
    for (iu, &u) in u_sequence.iter().enumerate() {
        for (ie, &eps) in epsilons.iter().enumerate() {
            let balls = BallFamily::new(centers.to_vec(), eps)?;
            let cell = (iu * epsilons.len() + ie) as u64;
            let estimate = joint_hit_probability_with(&source.with_cell(cell), u, &balls, trials, opts)?;
            if estimate.hits < MIN_CELL_HITS {
                return Err(PointProcError::InsufficientHits { u_abs: u.norm(), epsilon: eps, hits: estimate.hits });
            }
            let scale = eps.powi(-2 * n as i32);
            cells.push(LimitCell {
                u,
                epsilon: eps,
                scaled: estimate.value * scale,
                scaled_std_error: estimate.std_error * scale,
                estimate,
            });
        }
    }
    let extrapolation = if epsilons.len() >= 2 {
        let u = *u_sequence.last().expect("non-empty");
        let last: Vec<&LimitCell> = cells.iter().filter(|c| c.u == u).collect();
        let xs: Vec<f64> = last.iter().map(|c| c.epsilon * c.epsilon).collect();
        let ys: Vec<f64> = last.iter().map(|c| c.scaled).collect();
        let ses: Vec<f64> = last.iter().map(|c| c.scaled_std_error).collect();
        let (a, b, se) = weighted_line_fit(&xs, &ys, &ses);
        let eps_min = epsilons.last().copied().expect("non-empty");
        let extrap = b.abs() * eps_min * eps_min;
        Some(Extrapolation {
            u,
            intercept: a,
            slope: b,
            statistical_error: se,
            extrapolation_error: extrap,
            combined_error: se.hypot(extrap),
        })
    } else {
        None
    };
    Ok(CorrelationLimitReport { n, centers: centers.to_vec(), cells, extrapolation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialBin {
    pub r_lo: f64,
    pub r_hi: f64,
    pub mean_count: f64,
    pub count_std_error: f64,
    pub expected_count_per_area: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityProfile {
    pub radial_bins: Vec<RadialBin>,
    pub trials: u64,
    pub method: RootMethod,
    pub truncation_degree: usize,
    /// Mean number of zeros in `|z| ≤ search_radius` and its standard error.
    pub total_count: f64,
    pub total_std_error: f64,
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Radial first-intensity profile of the zeros of `z ↦ f(X, Φ(u, z))` in
/// `|z| ≤ search_radius`, split into equal-width annuli.
pub fn intensity_profile(
    law: CoefficientLaw,
    u: DiskPoint,
    search_radius: f64,
    bins: usize,
    trials: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<IntensityProfile, PointProcError> {
    intensity_profile_with(&LawSource::new(law, seed), u, search_radius, bins, trials, opts)
}

pub fn intensity_profile_with<S: SeriesSource>(
    source: &S,
    u: DiskPoint,
    search_radius: f64,
    bins: usize,
    trials: u64,
    opts: &McOptions,
) -> Result<IntensityProfile, PointProcError> {
    if trials == 0 {
        return Err(PointProcError::InvalidArgument("trials must be at least 1".into()));
    }
    if bins == 0 {
        return Err(PointProcError::InvalidArgument("bins must be at least 1".into()));
    }
    if !(search_radius > 0.0 && search_radius * (1.0 + MAX_JITTER) < 1.0) {
        return Err(PointProcError::InvalidArgument(format!("search radius {search_radius} out of range")));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| search_radius * i as f64 / bins as f64).collect();
    let width = search_radius / bins as f64;
    if width <= 2.0 * MAX_JITTER * search_radius {
        return Err(PointProcError::InvalidArgument("bins narrower than the contour jitter".into()));
    }
    let reach_jittered = image_max_modulus(u, DiskPoint::ORIGIN, search_radius * (1.0 + MAX_JITTER));
    let policy = opts.policy(reach_jittered);
    let degree = required_degree(&policy)?;
    let method = if degree <= GLOBAL_ROOTS_MAX_DEGREE {
        RootMethod::GlobalRoots
    } else {
        RootMethod::ArgumentPrinciple
    };
    let reach = image_max_modulus(u, DiskPoint::ORIGIN, search_radius);

    let per_trial: Vec<Vec<u32>> = run_trials(trials, |t, horner| {
        let series = source.series(t, &policy)?;
        let mut counts = vec![0u32; bins];
        match method {
            RootMethod::GlobalRoots => {
                let zs = find_roots(&series, reach, &opts.roots).map_err(|e| trial_failure(source, t, e))?;
                for z in &zs.zeros {
                    let xi = mobius_inverse(u, z.location).norm();
                    if xi <= search_radius {
                        let b = ((xi / width) as usize).min(bins - 1);
                        counts[b] += z.multiplicity as u32;
                    }
                }
            }
            RootMethod::ArgumentPrinciple => {
                let mut inside = 0usize;
                for (i, &r) in edges.iter().enumerate().skip(1) {
                    let bc = count_jittered_with(
                        &series,
                        DiskPoint::ORIGIN,
                        r,
                        Some(u),
                        &opts.roots,
                        ball_key(t, i),
                        horner,
                    )
                    .map_err(|e| trial_failure(source, t, e))?;
                    counts[i - 1] = bc.count.saturating_sub(inside) as u32;
                    inside = inside.max(bc.count);
                }
            }
        }
        Ok(counts)
    })?;

    let radial_bins = (0..bins)
        .map(|b| {
            let (mean, se) = mean_and_se(per_trial.iter().map(|c| c[b] as f64));
            let area = std::f64::consts::PI * (edges[b + 1].powi(2) - edges[b].powi(2));
            RadialBin {
                r_lo: edges[b],
                r_hi: edges[b + 1],
                mean_count: mean,
                count_std_error: se,
                expected_count_per_area: mean / area,
                std_error: se / area,
            }
        })
        .collect();
    let (total_count, total_std_error) =
        mean_and_se(per_trial.iter().map(|c| c.iter().map(|&x| x as f64).sum::<f64>()));
    Ok(IntensityProfile { radial_bins, trials, method, truncation_degree: degree, total_count, total_std_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSummary {
    pub samples: u64,
    /// Limiting variance `(1/2) Σ λ_i λ̄_j Q(z_i, z_j)`.
    pub sigma2: f64,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    /// Kolmogorov–Smirnov distance to `N(0, σ²)`; absent when `σ² = 0`.
    pub ks_distance: Option<f64>,
    pub truncation_degree: usize,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// `sup_x |F_n(x) − Φ(x/σ)|` for the empirical CDF of `samples`.
pub fn ks_distance_normal(samples: &[f64], sigma: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x / sigma);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Samples `Re Σ λ_i f(X, Φ(u, z_i))/Δ(u, z_i)` and compares its law with
/// the normal limit.
pub fn clt_statistic_sample(
    law: CoefficientLaw,
    u: DiskPoint,
    points: &[DiskPoint],
    lambdas: &[Complex64],
    samples: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<CltSummary, PointProcError> {
    clt_statistic_sample_with(&LawSource::new(law, seed), u, points, lambdas, samples, opts)
}

pub fn clt_statistic_sample_with<S: SeriesSource>(
    source: &S,
    u: DiskPoint,
    points: &[DiskPoint],
    lambdas: &[Complex64],
    samples: u64,
    opts: &McOptions,
) -> Result<CltSummary, PointProcError> {
    if points.len() != lambdas.len() || points.is_empty() {
        return Err(SeriesError::LengthMismatch { points: points.len(), lambdas: lambdas.len() }.into());
    }
    if samples < 1000 {
        return Err(PointProcError::InvalidArgument(format!("need at least 1000 samples, got {samples}")));
    }
    let mut var = Complex64::new(0.0, 0.0);
    for (i, &zi) in points.iter().enumerate() {
        for (j, &zj) in points.iter().enumerate() {
            var += lambdas[i] * lambdas[j].conj() * q_covariance(zi, zj);
        }
    }
    let sigma2 = 0.5 * var.re;
    let reach = points.iter().map(|&z| mobius(u, z).norm()).fold(0.0, f64::max);
    let policy = opts.policy(reach);
    let degree = required_degree(&policy)?;

    let values = run_trials(samples, |t, _| {
        let series = source.series(t, &policy)?;
        let mut s = Complex64::new(0.0, 0.0);
        for (&z, &lambda) in points.iter().zip(lambdas) {
            if lambda.norm_sqr() > 0.0 {
                s += lambda * series.pushforward_evaluate_prefix(u, z)?;
            }
        }
        Ok(s.re)
    })?;
    let (mean, _) = mean_and_se(values.iter().copied());
    let n = values.len() as f64;
    let empirical_variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ks_distance = (sigma2 > 0.0).then(|| ks_distance_normal(&values, sigma2.sqrt()));
    Ok(CltSummary {
        samples,
        sigma2,
        empirical_mean: mean,
        empirical_variance,
        ks_distance,
        truncation_degree: degree,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub trials: u64,
    pub hits_first: u64,
    pub hits_second: u64,
    pub hits_both: u64,
    pub indicator_covariance: f64,
    pub indicator_correlation: f64,
    /// Standard error of the correlation under independence, `1/√trials`.
    pub correlation_std_error: f64,
    pub field_covariance: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub field_covariance_std_error: [f64; 2],
    pub field_covariance_closed_form: Complex64,
    pub pseudo_hyperbolic_distance: f64,
}

/// Indicator and field-level dependence between the zero sets of
/// `f(X, Φ(u1, ·))` and `f(X, Φ(u2, ·))` on shared coefficients.
#[allow(clippy::too_many_arguments)]
pub fn independence_experiment(
    law: CoefficientLaw,
    u1: DiskPoint,
    u2: DiskPoint,
    center: DiskPoint,
    epsilon: f64,
    trials: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<IndependenceReport, PointProcError> {
    independence_experiment_with(&LawSource::new(law, seed), u1, u2, center, epsilon, trials, opts)
}

pub fn independence_experiment_with<S: SeriesSource>(
    source: &S,
    u1: DiskPoint,
    u2: DiskPoint,
    center: DiskPoint,
    epsilon: f64,
    trials: u64,
    opts: &McOptions,
) -> Result<IndependenceReport, PointProcError> {
    if trials < 2 {
        return Err(PointProcError::InvalidArgument("need at least 2 trials".into()));
    }
    let balls = BallFamily::new(vec![center], epsilon)?;
    let reach = certified_reach(u1, balls.centers(), epsilon)?.max(certified_reach(u2, balls.centers(), epsilon)?);
    let policy = opts.policy(reach);

    let per_trial = run_trials(trials, |t, horner| {
        let series = source.series(t, &policy)?;
        let key = ball_key(t, 0);
        let mut hit = [false; 2];
        for (k, &u) in [u1, u2].iter().enumerate() {
            let bc = count_jittered_with(&series, center, epsilon, Some(u), &opts.roots, key, horner)
                .map_err(|e| trial_failure(source, t, e))?;
            hit[k] = bc.count > 0;
        }
        let f1 = series.pushforward_evaluate_prefix(u1, center)?;
        let f2 = series.pushforward_evaluate_prefix(u2, center)?;
        Ok((hit, f1 * f2.conj()))
    })?;

    let t = trials as u128;
    let h1 = per_trial.iter().filter(|r| r.0[0]).count() as u128;
    let h2 = per_trial.iter().filter(|r| r.0[1]).count() as u128;
    let h12 = per_trial.iter().filter(|r| r.0[0] && r.0[1]).count() as u128;
    let num = (t * h12) as f64 - (h1 * h2) as f64;
    let v1 = t * h1 - h1 * h1;
    let v2 = t * h2 - h2 * h2;
    let correlation = if v1 == v2 && h1 == h12 && h2 == h12 && v1 > 0 {
        // identical indicator vectors
        1.0
    } else if v1 == 0 || v2 == 0 {
        0.0
    } else {
        num / ((v1 as f64).sqrt() * (v2 as f64).sqrt())
    };

    let (re, re_se) = mean_and_se(per_trial.iter().map(|r| r.1.re));
    let (im, im_se) = mean_and_se(per_trial.iter().map(|r| r.1.im));
    Ok(IndependenceReport {
        trials,
        hits_first: h1 as u64,
        hits_second: h2 as u64,
        hits_both: h12 as u64,
        indicator_covariance: num / (t * t) as f64,
        indicator_correlation: correlation,
        correlation_std_error: 1.0 / (trials as f64).sqrt(),
        field_covariance: Complex64::new(re, im),
        field_covariance_std_error: [re_se, im_se],
        field_covariance_closed_form: cross_covariance(u1, center, u2, center),
        pseudo_hyperbolic_distance: pseudo_hyperbolic_distance(u1, u2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(re: f64, im: f64) -> DiskPoint {
        DiskPoint::new(re, im).unwrap()
    }

    #[test]
    fn ball_family_validation() {
        assert!(BallFamily::new(vec![p(0.0, 0.0)], 0.1).is_ok());
        assert!(BallFamily::new(vec![p(0.95, 0.0)], 0.1).is_err());
        assert!(BallFamily::new(vec![p(0.0, 0.0), p(0.15, 0.0)], 0.1).is_err());
        assert!(BallFamily::new(vec![p(0.0, 0.0), p(0.15, 0.0)], 0.05).is_ok());
        assert!(BallFamily::new(vec![], 0.1).is_err());
        assert!(BallFamily::new(vec![p(0.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let balls = BallFamily::new(vec![DiskPoint::ORIGIN], 0.1).unwrap();
        let opts = McOptions::default();
        assert!(joint_hit_probability(CoefficientLaw::ComplexGaussian, DiskPoint::ORIGIN, &balls, 0, 1, &opts).is_err());
        assert!(intensity_profile(CoefficientLaw::ComplexGaussian, DiskPoint::ORIGIN, 0.5, 4, 0, 1, &opts).is_err());
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.01, 0.0025, 0.04];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x).collect();
        let (a, b, se) = weighted_line_fit(&xs, &ys, &[0.1, 0.2, 0.05]);
        assert!((a - 2.0).abs() < 1e-12 && (b + 3.0).abs() < 1e-10 && se > 0.0);
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let q = (i as f64 + 0.5) / n as f64;
                statrs::function::erf::erf_inv(2.0 * q - 1.0) * std::f64::consts::SQRT_2 * 1.5
            })
            .collect();
        assert!(ks_distance_normal(&xs, 1.5) <= 0.5 / n as f64 + 1e-9);
        assert!(ks_distance_normal(&xs, 1.0) > 0.05);
    }

    #[test]
    fn clt_with_zero_weights_is_degenerate() {
        let s = clt_statistic_sample(
            CoefficientLaw::ComplexGaussian,
            p(0.5, 0.0),
            &[p(0.3, 0.0)],
            &[Complex64::new(0.0, 0.0)],
            1000,
            1,
            &McOptions::default(),
        )
        .unwrap();
        assert_eq!(s.sigma2, 0.0);
        assert_eq!(s.ks_distance, None);
        assert_eq!(s.empirical_variance, 0.0);
    }

    #[test]
    fn correlation_limit_rejects_bad_grids() {
        let opts = McOptions::default();
        let law = CoefficientLaw::ComplexGaussian;
        let c = [DiskPoint::ORIGIN];
        assert!(correlation_limit(law, &[DiskPoint::ORIGIN], &[0.1, 0.2], &c, 10, 1, &opts).is_err());
        assert!(correlation_limit(law, &[p(0.5, 0.0), p(0.2, 0.0)], &[0.1], &c, 10, 1, &opts).is_err());
        assert!(matches!(
            correlation_limit(law, &[DiskPoint::ORIGIN], &[0.05], &c, 100, 1, &opts),
            Err(PointProcError::InsufficientHits { .. })
        ));
    }
}
