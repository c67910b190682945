//! Zeros of truncated series: global extraction by simultaneous (Aberth)
//! iteration, and counting inside balls by the argument principle.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::splitmix64;
use crate::hypgeom::{image_max_modulus, mobius_c, mobius_derivative_c, DiskPoint};
use crate::series::{horner_with_derivative, MultiHorner, SeriesError, TruncatedSeries};

/// Roots closer than this are reported as one root with multiplicity.
pub const MULTIPLICITY_CLUSTER: f64 = 1e-9;

/// Trailing coefficients below this fraction of the largest are dropped.
pub const TRIM_RELATIVE: f64 = 1e-14;

/// Maximum relative radius jitter used to step off a near-contour zero.
pub const MAX_JITTER: f64 = 0.01;

/// Jittered retries after the first attempt.
pub const JITTER_RETRIES: u32 = 4;

/// A contour value within this many ulps of its evaluation scale counts
/// as a zero on the contour.
pub const CONTOUR_ULPS: f64 = 1e3;

/// Node doublings tried before giving up on an unresolved contour integral.
pub const NODE_DOUBLINGS: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("root iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("all coefficients vanish")]
    DegenerateInput,
    #[error("a zero lies on or near the contour (min |g| = {min_abs:e}, threshold {threshold:e})")]
    ContourTooClose { min_abs: f64, threshold: f64 },
    #[error("contour integral {re} + {im}i with {nodes} nodes is not near an integer")]
    QuadratureUnresolved { re: f64, im: f64, nodes: usize },
    #[error("ball of radius {radius} around ({re}, {im}) is not inside the disk")]
    InvalidBall { re: f64, im: f64, radius: f64 },
    #[error("invalid root configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootConfig {
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    pub quadrature_nodes: usize,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig { residual_tolerance: 1e-8, max_iterations: 200, quadrature_nodes: 256 }
    }
}

impl RootConfig {
    pub fn validate(&self) -> Result<(), RootError> {
        if !(self.residual_tolerance > 0.0) {
            return Err(RootError::InvalidConfig("residual_tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(RootError::InvalidConfig("max_iterations must be positive".into()));
        }
        if self.quadrature_nodes < 8 {
            return Err(RootError::InvalidConfig("quadrature_nodes must be at least 8".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootMethod {
    GlobalRoots,
    ArgumentPrinciple,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub location: DiskPoint,
    pub residual: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    pub zeros: Vec<Zero>,
    pub search_radius: f64,
    pub method: RootMethod,
    /// `max_k |c_k| R^k` with `R` the search radius.
    pub coefficient_scale: f64,
}

impl ZeroSet {
    /// Number of zeros, with multiplicity.
    pub fn count(&self) -> usize {
        self.zeros.iter().map(|z| z.multiplicity).sum()
    }

    /// Zeros (with multiplicity) strictly inside `|z − center| < radius`.
    pub fn count_in_ball(&self, center: Complex64, radius: f64) -> usize {
        self.zeros
            .iter()
            .filter(|z| (z.location.to_complex() - center).norm() < radius)
            .map(|z| z.multiplicity)
            .sum()
    }
}

fn coefficient_scale(coefficients: &[Complex64], radius: f64) -> f64 {
    let mut rk = 1.0;
    let mut best = 0.0f64;
    for c in coefficients {
        best = best.max(c.norm() * rk);
        rk *= radius;
    }
    best
}

/// All zeros of the truncated polynomial with modulus at most `search_radius`.
pub fn find_roots(
    series: &TruncatedSeries,
    search_radius: f64,
    config: &RootConfig,
) -> Result<ZeroSet, RootError> {
    config.validate()?;
    series.check_radius(search_radius)?;
    let original = series.coefficients();
    let max = original.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max == 0.0 || !max.is_finite() {
        return Err(RootError::DegenerateInput);
    }
    let mut end = original.len();
    while end > 1 && original[end - 1].norm() < TRIM_RELATIVE * max {
        end -= 1;
    }
    let trimmed = &original[..end];
    let zero_roots = trimmed.iter().take_while(|c| c.norm() == 0.0).count();
    let reduced = &trimmed[zero_roots..];

    let mut candidates: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); zero_roots];
    match reduced.len() {
        0 | 1 => {}
        2 => candidates.push(-reduced[0] / reduced[1]),
        _ => candidates.extend(aberth(reduced, config.max_iterations)?),
    }

    let scale = coefficient_scale(original, search_radius);
    let slack = 1e-12 * search_radius.max(1e-300);
    let mut kept = Vec::new();
    for root in candidates {
        if root.norm() > search_radius + slack {
            continue;
        }
        let polished = if root.norm() == 0.0 { root } else { newton_polish(original, root) };
        let residual = horner_with_derivative(original, polished).0.norm();
        if residual > config.residual_tolerance * scale {
            return Err(RootError::NonConvergence { iterations: config.max_iterations });
        }
        if polished.norm() <= search_radius {
            kept.push((polished, residual));
        }
    }
    Ok(ZeroSet {
        zeros: cluster(kept),
        search_radius,
        method: RootMethod::GlobalRoots,
        coefficient_scale: scale,
    })
}

fn cluster(mut roots: Vec<(Complex64, f64)>) -> Vec<Zero> {
    roots.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let mut used = vec![false; roots.len()];
    let mut zeros = Vec::with_capacity(roots.len());
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![i];
        for j in i + 1..roots.len() {
            if !used[j] && (roots[j].0 - roots[i].0).norm() < MULTIPLICITY_CLUSTER {
                members.push(j);
            }
        }
        for &j in &members {
            used[j] = true;
        }
        let n = members.len();
        let location = members.iter().map(|&j| roots[j].0).sum::<Complex64>() / n as f64;
        let residual = members.iter().map(|&j| roots[j].1).fold(0.0, f64::max);
        // exact zeros at the origin come from vanishing leading coefficients
        if n > 1 && location != Complex64::new(0.0, 0.0) {
            log::warn!("multiple zero (multiplicity {n}) near {location}");
        }
        zeros.push(Zero { location: DiskPoint::from_complex_unchecked(location), residual, multiplicity: n });
    }
    zeros
}

fn newton_polish(coefficients: &[Complex64], mut z: Complex64) -> Complex64 {
    let mut best = horner_with_derivative(coefficients, z).0.norm();
    for _ in 0..8 {
        let (f, df) = horner_with_derivative(coefficients, z);
        if f.norm() == 0.0 || df.norm() == 0.0 {
            break;
        }
        let next = z - f / df;
        let r = horner_with_derivative(coefficients, next).0.norm();
        if !(r < best) {
            break;
        }
        best = r;
        let step = (next - z).norm();
        z = next;
        if step <= 4.0 * f64::EPSILON * z.norm() {
            break;
        }
    }
    z
}

/// `p(z)/p'(z)` evaluated stably on both sides of the unit circle, and
/// whether `|p(z)|` is already below its rounding-error bound.
fn newton_ratio(coefficients: &[Complex64], z: Complex64) -> (Complex64, bool) {
    let n = coefficients.len() - 1;
    let bound_factor = 4.0 * (n as f64 + 1.0) * f64::EPSILON;
    if z.norm() <= 1.0 {
        let mut f = coefficients[n];
        let mut df = Complex64::new(0.0, 0.0);
        let mut abs_sum = coefficients[n].norm();
        let r = z.norm();
        for &c in coefficients[..n].iter().rev() {
            df = df * z + f;
            f = f * z + c;
            abs_sum = abs_sum * r + c.norm();
        }
        (f / df, f.norm() <= bound_factor * abs_sum)
    } else {
        // p(z) = z^n q(1/z) with q the reversed polynomial.
        let y = z.inv();
        let mut q = coefficients[0];
        let mut dq = Complex64::new(0.0, 0.0);
        let mut abs_sum = coefficients[0].norm();
        let r = y.norm();
        for &c in coefficients[1..].iter() {
            dq = dq * y + q;
            q = q * y + c;
            abs_sum = abs_sum * r + c.norm();
        }
        let small = q.norm() <= bound_factor * abs_sum;
        let ratio = (y * (n as f64 - y * dq / q)).inv();
        (ratio, small)
    }
}

/// Starting points on circles whose radii come from the upper convex hull
/// of `(k, log|c_k|)`.
fn initial_guesses(coefficients: &[Complex64]) -> Vec<Complex64> {
    let n = coefficients.len() - 1;
    let pts: Vec<(usize, f64)> = coefficients
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(k, c)| (k, c.norm().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 as f64 - a.0 as f64) * (p.1 - a.1) - (b.1 - a.1) * (p.0 as f64 - a.0 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut guesses = Vec::with_capacity(n);
    for w in hull.windows(2) {
        let (i, li) = w[0];
        let (j, lj) = w[1];
        let m = j - i;
        let radius = ((li - lj) / m as f64).exp();
        let offset = TAU * i as f64 / n as f64 + 0.4;
        for k in 0..m {
            guesses.push(Complex64::from_polar(radius, TAU * k as f64 / m as f64 + offset));
        }
    }
    guesses
}

/// Aberth–Ehrlich iteration for all roots of a polynomial with nonzero
/// constant and leading coefficients.
fn aberth(coefficients: &[Complex64], max_iterations: usize) -> Result<Vec<Complex64>, RootError> {
    let n = coefficients.len() - 1;
    let mut z = initial_guesses(coefficients);
    debug_assert_eq!(z.len(), n);
    let mut done = vec![false; n];
    for iter in 0..max_iterations {
        let mut all_done = true;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (ratio, small) = newton_ratio(coefficients, z[i]);
            if small {
                done[i] = true;
                continue;
            }
            let zi = z[i];
            let sum: Complex64 = z
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &zj)| (zi - zj).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * sum);
            if !step.is_finite() {
                // nudge off a critical point
                z[i] = zi * Complex64::from_polar(1.0 + 1e-7, 1e-3 * (iter + 1) as f64);
                all_done = false;
                continue;
            }
            z[i] = zi - step;
            if step.norm() <= 2.0 * f64::EPSILON * z[i].norm() {
                done[i] = true;
            } else {
                all_done = false;
            }
        }
        if all_done && done.iter().all(|&d| d) {
            return Ok(z);
        }
    }
    Err(RootError::NonConvergence { iterations: max_iterations })
}

struct Winding {
    integral: Complex64,
    discrete: i64,
    /// Worst node below its threshold; `threshold == 0` when none is.
    min_abs: f64,
    threshold: f64,
}

fn winding(
    prefix: &[Complex64],
    center: Complex64,
    radius: f64,
    u: Option<Complex64>,
    nodes: usize,
    horner: &mut MultiHorner,
) -> Winding {
    let offsets: Vec<Complex64> = (0..nodes)
        .map(|k| Complex64::from_polar(radius, TAU * k as f64 / nodes as f64))
        .collect();
    let contour: Vec<Complex64> = offsets.iter().map(|&d| center + d).collect();
    let images: Vec<Complex64> = match u {
        Some(u) => contour.iter().map(|&z| mobius_c(u, z)).collect(),
        None => contour.clone(),
    };
    let (mut values, mut derivs) = (Vec::with_capacity(nodes), Vec::with_capacity(nodes));
    horner.evaluate(prefix, &images, &mut values, &mut derivs);
    // A node is too close to a zero when |g| is within 1e3 ulps of the
    // rounding scale Σ|c_k||w|^k of its own Horner evaluation. The bound at
    // the largest |w| screens nodes cheaply.
    let rho = images.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let screen = CONTOUR_ULPS * f64::EPSILON * abs_horner(prefix, rho);
    let (mut min_abs, mut threshold) = (f64::INFINITY, 0.0);
    for (g, w) in values.iter().zip(&images) {
        let a = g.norm();
        if a < screen {
            let t = CONTOUR_ULPS * f64::EPSILON * abs_horner(prefix, w.norm());
            if a < t && (threshold == 0.0 || a / t < min_abs / threshold) {
                (min_abs, threshold) = (a, t);
            }
        }
    }

    let mut integral = Complex64::new(0.0, 0.0);
    for k in 0..nodes {
        let mut dg = derivs[k];
        if let Some(u) = u {
            dg *= mobius_derivative_c(u, contour[k]);
        }
        integral += dg / values[k] * offsets[k];
    }
    integral /= nodes as f64;

    let mut turns = 0.0;
    for k in 0..nodes {
        let next = values[(k + 1) % nodes];
        turns += (next / values[k]).arg();
    }
    Winding { integral, discrete: (turns / TAU).round() as i64, min_abs, threshold }
}

/// `Σ |c_k| r^k`.
fn abs_horner(coefficients: &[Complex64], r: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
}

fn check_ball(center: DiskPoint, radius: f64) -> Result<(), RootError> {
    if !(radius > 0.0) || center.norm() + radius >= 1.0 {
        return Err(RootError::InvalidBall { re: center.re(), im: center.im(), radius });
    }
    Ok(())
}

/// Zeros (with multiplicity) of `g = f ∘ Φ(u, ·)` (or of `f` when `u` is
/// `None`) inside `|z − center| < radius`, by trapezoidal quadrature of
/// `g′/g` on the boundary circle.
///
/// The quadrature must land within 0.1 of an integer and agree with the
/// discrete winding of `g` over the same nodes; otherwise the node count
/// is doubled, up to [`NODE_DOUBLINGS`] times.
pub fn count_zeros_in_disk(
    series: &TruncatedSeries,
    center: DiskPoint,
    radius: f64,
    u: Option<DiskPoint>,
    config: &RootConfig,
) -> Result<usize, RootError> {
    count_with(series, center, radius, u, config, &mut MultiHorner::default())
}

fn count_with(
    series: &TruncatedSeries,
    center: DiskPoint,
    radius: f64,
    u: Option<DiskPoint>,
    config: &RootConfig,
    horner: &mut MultiHorner,
) -> Result<usize, RootError> {
    config.validate()?;
    check_ball(center, radius)?;
    let reach = image_max_modulus(u.unwrap_or(DiskPoint::ORIGIN), center, radius);
    let prefix = series.certified_prefix(reach)?;
    if prefix.iter().all(|c| c.norm() == 0.0) {
        return Err(RootError::DegenerateInput);
    }
    let uc = u.map(|p| p.to_complex()).filter(|p| p.norm_sqr() > 0.0);
    let mut nodes = config.quadrature_nodes;
    let mut last = Complex64::new(f64::NAN, f64::NAN);
    for _ in 0..=NODE_DOUBLINGS {
        let w = winding(prefix, center.to_complex(), radius, uc, nodes, horner);
        if w.threshold > 0.0 {
            return Err(RootError::ContourTooClose { min_abs: w.min_abs, threshold: w.threshold });
        }
        let n = w.integral.re.round();
        if n >= 0.0
            && (w.integral.re - n).abs() <= 0.1
            && w.integral.im.abs() <= 0.1
            && w.discrete == n as i64
        {
            return Ok(n as usize);
        }
        last = w.integral;
        nodes *= 2;
    }
    Err(RootError::QuadratureUnresolved { re: last.re, im: last.im, nodes: nodes / 2 })
}

/// A count together with the radius that was actually integrated over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallCount {
    pub count: usize,
    pub radius: f64,
    pub attempts: u32,
}

/// Radius used on attempt `attempt` (0 = unjittered) for jitter key `key`.
///
/// Attempts alternate inward and outward (starting side drawn from `key`),
/// so one of the first two moves the contour by at least half the maximal
/// jitter away from any zero sitting on it. Later attempts use smaller
/// offsets.
pub fn jittered_radius(center: DiskPoint, radius: f64, key: u64, attempt: u32) -> f64 {
    if attempt == 0 {
        return radius;
    }
    let bits = splitmix64(key ^ splitmix64(attempt as u64));
    let unit = (bits >> 11) as f64 / (1u64 << 53) as f64;
    let outward_first = splitmix64(key) & 1 == 1;
    let sign = if (attempt % 2 == 1) == outward_first { 1.0 } else { -1.0 };
    let scale = if attempt <= 2 { 0.5 } else { 0.25 };
    let mut delta = sign * MAX_JITTER * scale * (1.0 + unit);
    if center.norm() + radius * (1.0 + delta) >= 1.0 {
        delta = -delta.abs();
    }
    radius * (1.0 + delta)
}

/// [`count_zeros_in_disk`] with deterministic radius jitter of at most
/// ±[`MAX_JITTER`] when a zero sits on or near the contour.
///
/// The series must be certified for the jittered radii as well.
pub fn count_zeros_jittered(
    series: &TruncatedSeries,
    center: DiskPoint,
    radius: f64,
    u: Option<DiskPoint>,
    config: &RootConfig,
    key: u64,
) -> Result<BallCount, RootError> {
    count_jittered_with(series, center, radius, u, config, key, &mut MultiHorner::default())
}

pub(crate) fn count_jittered_with(
    series: &TruncatedSeries,
    center: DiskPoint,
    radius: f64,
    u: Option<DiskPoint>,
    config: &RootConfig,
    key: u64,
    horner: &mut MultiHorner,
) -> Result<BallCount, RootError> {
    let mut last_err = None;
    for attempt in 0..=JITTER_RETRIES {
        let r = jittered_radius(center, radius, key, attempt);
        match count_with(series, center, r, u, config, horner) {
            Ok(count) => return Ok(BallCount { count, radius: r, attempts: attempt + 1 }),
            Err(e @ (RootError::ContourTooClose { .. } | RootError::QuadratureUnresolved { .. })) => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}
