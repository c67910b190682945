//! Truncated power series `Σ x_k z^k` with a mean-square tail certificate,
//! Horner evaluation, Möbius pushforward, and the α_k machinery behind the
//! CLT for pushed-forward linear statistics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::{CoefficientLaw, Law, SeededStream};
use crate::hypgeom::{delta, delta_c, mobius, mobius_c, DiskPoint};

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_SAFETY_FACTOR: f64 = 10.0;

/// Draws searched for a first nonzero coefficient before giving up.
pub const MAX_LEADING_ZEROS: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("truncation radius {0} is not strictly inside (0, 1)")]
    PolicyInfeasible(f64),
    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(String),
    #[error("|z| = {modulus} exceeds the certified radius {radius}")]
    OutOfCertifiedDisk { modulus: f64, radius: f64 },
    #[error("{points} points but {lambdas} weights")]
    LengthMismatch { points: usize, lambdas: usize },
    #[error("closed form only available for p = 2 or p = 4, got {0}")]
    UnsupportedExponent(f64),
    #[error("a series needs at least one coefficient")]
    Empty,
    #[error("no nonzero coefficient among the first {0} draws")]
    Vanishing(usize),
}

/// How far to truncate: the mean-square tail on `|z| ≤ target_radius`,
/// inflated by `safety_factor`, must not exceed `tail_tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub target_radius: f64,
    pub tail_tolerance: f64,
    pub safety_factor: f64,
}

impl TruncationPolicy {
    pub fn new(target_radius: f64) -> Self {
        TruncationPolicy {
            target_radius,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            safety_factor: DEFAULT_SAFETY_FACTOR,
        }
    }

    pub fn with_radius(self, target_radius: f64) -> Self {
        TruncationPolicy { target_radius, ..self }
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        if !(self.target_radius >= 0.0 && self.target_radius < 1.0) {
            return Err(SeriesError::PolicyInfeasible(self.target_radius));
        }
        if !(self.tail_tolerance > 0.0 && self.tail_tolerance.is_finite()) {
            return Err(SeriesError::InvalidPolicy(format!(
                "tail_tolerance must be positive, got {}",
                self.tail_tolerance
            )));
        }
        if !(self.safety_factor >= 1.0 && self.safety_factor.is_finite()) {
            return Err(SeriesError::InvalidPolicy(format!(
                "safety_factor must be at least 1, got {}",
                self.safety_factor
            )));
        }
        Ok(())
    }
}

/// RMS of the tail `Σ_{k>N} X_k z^k` over `|z| ≤ r` for unit-variance
/// coefficients is at most `r^{N+1}/√(1 − r²)`.
pub fn tail_rms_bound(radius: f64, degree: usize) -> f64 {
    radius.powf(degree as f64 + 1.0) / (1.0 - radius * radius).sqrt()
}

/// Smallest degree `N` whose certified tail meets the policy.
pub fn required_degree(policy: &TruncationPolicy) -> Result<usize, SeriesError> {
    policy.validate()?;
    let r = policy.target_radius;
    let ok = |n: usize| policy.safety_factor * tail_rms_bound(r, n) <= policy.tail_tolerance;
    if r == 0.0 || ok(0) {
        return Ok(0);
    }
    let target = (policy.tail_tolerance * (1.0 - r * r).sqrt() / policy.safety_factor).ln();
    let mut n = ((target / r.ln()).ceil() as usize).saturating_sub(1);
    while n > 0 && ok(n - 1) {
        n -= 1;
    }
    while !ok(n) {
        n += 1;
    }
    Ok(n)
}

/// Largest radius certified by a degree-`N` truncation under the tolerance
/// and safety factor of `policy` (its target radius is ignored).
pub fn certified_radius(degree: usize, policy: &TruncationPolicy) -> f64 {
    let ok = |r: f64| policy.safety_factor * tail_rms_bound(r, degree) <= policy.tail_tolerance;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesProvenance {
    pub law: CoefficientLaw,
    pub stream: SeededStream,
}

/// A finite coefficient vector standing in for the full random series on
/// the closed disk `|z| ≤ tail_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    coefficients: Vec<Complex64>,
    /// Number of leading zero coefficients (0 for fixed polynomials).
    lead: usize,
    provenance: Option<SeriesProvenance>,
    policy: Option<TruncationPolicy>,
    tail_radius: f64,
    tail_bound: f64,
}

impl TruncatedSeries {
    /// Draws a series from `law`, truncated per `policy`.
    pub fn sample(
        law: CoefficientLaw,
        policy: &TruncationPolicy,
        stream: SeededStream,
    ) -> Result<Self, SeriesError> {
        let degree = required_degree(policy)?;
        let mut rng = stream.rng();
        let mut coefficients = vec![Complex64::new(0.0, 0.0); degree + 1];
        law.fill(&mut rng, &mut coefficients);
        // Laws with an atom at 0 can start with zeros: f = z^m h, and the
        // certified degree then applies to h. Later draws continue the same
        // coefficient sequence.
        while leading_zeros(&coefficients) == coefficients.len() {
            if coefficients.len() >= MAX_LEADING_ZEROS {
                return Err(SeriesError::Vanishing(coefficients.len()));
            }
            coefficients.push(law.draw(&mut rng));
        }
        let needed = leading_zeros(&coefficients) + degree + 1;
        while coefficients.len() < needed {
            coefficients.push(law.draw(&mut rng));
        }
        Ok(Self::from_parts(coefficients, Some(SeriesProvenance { law, stream }), *policy))
    }

    /// Wraps coefficients drawn elsewhere under an explicit policy.
    pub fn from_sampled(
        coefficients: Vec<Complex64>,
        policy: &TruncationPolicy,
        provenance: Option<SeriesProvenance>,
    ) -> Result<Self, SeriesError> {
        policy.validate()?;
        if coefficients.is_empty() {
            return Err(SeriesError::Empty);
        }
        let needed = required_degree(policy)? + 1;
        if coefficients.len() < needed {
            return Err(SeriesError::InvalidPolicy(format!(
                "{} coefficients cannot certify radius {} (need {needed})",
                coefficients.len(),
                policy.target_radius
            )));
        }
        Ok(Self::from_parts(coefficients, provenance, *policy))
    }

    /// A fixed polynomial, evaluable on `|z| ≤ tail_radius`.
    pub fn from_coefficients(coefficients: Vec<Complex64>, tail_radius: f64) -> Result<Self, SeriesError> {
        if coefficients.is_empty() {
            return Err(SeriesError::Empty);
        }
        if !(tail_radius > 0.0 && tail_radius < 1.0) {
            return Err(SeriesError::PolicyInfeasible(tail_radius));
        }
        let degree = coefficients.len() - 1;
        Ok(TruncatedSeries {
            lead: 0,
            coefficients,
            provenance: None,
            policy: None,
            tail_radius,
            tail_bound: tail_rms_bound(tail_radius, degree),
        })
    }

    fn from_parts(
        coefficients: Vec<Complex64>,
        provenance: Option<SeriesProvenance>,
        policy: TruncationPolicy,
    ) -> Self {
        let degree = coefficients.len() - 1;
        let r = policy.target_radius;
        TruncatedSeries {
            lead: leading_zeros(&coefficients).min(degree),
            coefficients,
            provenance,
            policy: Some(policy),
            tail_radius: r,
            tail_bound: tail_rms_bound(r, degree).max(f64::MIN_POSITIVE),
        }
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn tail_radius(&self) -> f64 {
        self.tail_radius
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn provenance(&self) -> Option<&SeriesProvenance> {
        self.provenance.as_ref()
    }

    pub fn policy(&self) -> Option<&TruncationPolicy> {
        self.policy.as_ref()
    }

    /// Coefficient prefix that is already certified on `|z| ≤ radius`:
    /// the leading zeros plus the certified degree of what follows.
    /// Fixed polynomials always use every coefficient.
    pub fn certified_prefix(&self, radius: f64) -> Result<&[Complex64], SeriesError> {
        self.check_radius(radius)?;
        let len = match &self.policy {
            Some(p) => (self.lead + required_degree(&p.with_radius(radius))? + 1).min(self.coefficients.len()),
            None => self.coefficients.len(),
        };
        Ok(&self.coefficients[..len])
    }

    pub(crate) fn check_radius(&self, modulus: f64) -> Result<(), SeriesError> {
        // a few ulps of slack for points computed on the certified circle
        if modulus <= self.tail_radius * (1.0 + 4.0 * f64::EPSILON) {
            Ok(())
        } else {
            Err(SeriesError::OutOfCertifiedDisk { modulus, radius: self.tail_radius })
        }
    }

    pub fn evaluate(&self, z: Complex64) -> Result<Complex64, SeriesError> {
        self.check_radius(z.norm())?;
        Ok(horner(&self.coefficients, z))
    }

    /// Value and derivative at `z`.
    pub fn evaluate_with_derivative(&self, z: Complex64) -> Result<(Complex64, Complex64), SeriesError> {
        self.check_radius(z.norm())?;
        Ok(horner_with_derivative(&self.coefficients, z))
    }

    /// `f(Φ(u, z))/Δ(u, z)`.
    pub fn pushforward_evaluate(&self, u: DiskPoint, z: DiskPoint) -> Result<Complex64, SeriesError> {
        let w = mobius(u, z).to_complex();
        Ok(self.evaluate(w)? / delta(u, z))
    }

    /// Like [`Self::pushforward_evaluate`] but only using the coefficient
    /// prefix certified at `|Φ(u, z)|`.
    pub fn pushforward_evaluate_prefix(&self, u: DiskPoint, z: DiskPoint) -> Result<Complex64, SeriesError> {
        let w = mobius_c(u.to_complex(), z.to_complex());
        let prefix = self.certified_prefix(w.norm())?;
        Ok(horner(prefix, w) / delta_c(u.to_complex(), z.to_complex()))
    }
}

fn leading_zeros(coefficients: &[Complex64]) -> usize {
    coefficients.iter().take_while(|c| c.re == 0.0 && c.im == 0.0).count()
}

#[inline]
pub fn horner(coefficients: &[Complex64], z: Complex64) -> Complex64 {
    coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

#[inline]
pub fn horner_with_derivative(coefficients: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut iter = coefficients.iter().rev();
    let mut f = iter.next().copied().unwrap_or_default();
    let mut df = Complex64::new(0.0, 0.0);
    for &c in iter {
        df = df * z + f;
        f = f * z + c;
    }
    (f, df)
}

/// Evaluates a polynomial and its derivative at many points at once.
///
/// Points are kept in split real/imaginary arrays so the inner loop over
/// points vectorizes; this is the hot path of contour counting.
#[derive(Debug, Default, Clone)]
pub struct MultiHorner {
    wr: Vec<f64>,
    wi: Vec<f64>,
    fr: Vec<f64>,
    fi: Vec<f64>,
    dr: Vec<f64>,
    di: Vec<f64>,
}

impl MultiHorner {
    pub fn evaluate(
        &mut self,
        coefficients: &[Complex64],
        points: &[Complex64],
        values: &mut Vec<Complex64>,
        derivatives: &mut Vec<Complex64>,
    ) {
        let m = points.len();
        self.wr.clear();
        self.wi.clear();
        self.wr.extend(points.iter().map(|w| w.re));
        self.wi.extend(points.iter().map(|w| w.im));
        let lead = coefficients.last().copied().unwrap_or_default();
        self.fr.clear();
        self.fi.clear();
        self.fr.resize(m, lead.re);
        self.fi.resize(m, lead.im);
        self.dr.clear();
        self.di.clear();
        self.dr.resize(m, 0.0);
        self.di.resize(m, 0.0);
        let n = coefficients.len();
        for c in coefficients[..n.saturating_sub(1)].iter().rev() {
            let (cr, ci) = (c.re, c.im);
            for (((((wr, wi), fr), fi), dr), di) in self
                .wr
                .iter()
                .zip(&self.wi)
                .zip(self.fr.iter_mut())
                .zip(self.fi.iter_mut())
                .zip(self.dr.iter_mut())
                .zip(self.di.iter_mut())
            {
                let (f_re, f_im) = (*fr, *fi);
                let nd_re = *dr * wr - *di * wi + f_re;
                let nd_im = *dr * wi + *di * wr + f_im;
                *dr = nd_re;
                *di = nd_im;
                *fr = f_re * wr - f_im * wi + cr;
                *fi = f_re * wi + f_im * wr + ci;
            }
        }
        values.clear();
        derivatives.clear();
        values.extend(self.fr.iter().zip(&self.fi).map(|(&r, &i)| Complex64::new(r, i)));
        derivatives.extend(self.dr.iter().zip(&self.di).map(|(&r, &i)| Complex64::new(r, i)));
    }
}

/// `α_k(u) = Σ_i λ_i Φ(u, z_i)^k / Δ(u, z_i)` for `k = 0..=degree`.
pub fn alpha_coefficients(
    u: DiskPoint,
    points: &[DiskPoint],
    lambdas: &[Complex64],
    degree: usize,
) -> Result<Vec<Complex64>, SeriesError> {
    if points.len() != lambdas.len() || points.is_empty() {
        return Err(SeriesError::LengthMismatch { points: points.len(), lambdas: lambdas.len() });
    }
    let mut alphas = vec![Complex64::new(0.0, 0.0); degree + 1];
    for (&z, &lambda) in points.iter().zip(lambdas) {
        let w = mobius(u, z).to_complex();
        let mut term = lambda / delta(u, z);
        for a in alphas.iter_mut() {
            *a += term;
            term *= w;
        }
    }
    Ok(alphas)
}

/// Closed form of `Σ_k |Φ(u, z)|^{pk} / |Δ(u, z)|^p` for `p ∈ {2, 4}`.
pub fn alpha_power_sum(u: DiskPoint, z: DiskPoint, p: f64) -> Result<f64, SeriesError> {
    let uc = u.to_complex();
    let zc = z.to_complex();
    if p == 2.0 {
        Ok(1.0 / (1.0 - z.norm_sqr()))
    } else if p == 4.0 {
        let a = (Complex64::new(1.0, 0.0) - uc.conj() * zc).norm_sqr();
        let b = (zc - uc).norm_sqr();
        Ok((1.0 - u.norm_sqr()) / ((1.0 - z.norm_sqr()) * (a + b)))
    } else {
        Err(SeriesError::UnsupportedExponent(p))
    }
}

/// `Σ_k Φ(u1, z1)^k conj(Φ(u2, z2))^k / (Δ(u1, z1) conj(Δ(u2, z2)))` summed
/// term by term until the geometric tail bound drops below `tail`.
/// Returns the sum and the number of terms used.
pub fn direct_covariance_sum(u1: DiskPoint, z1: DiskPoint, u2: DiskPoint, z2: DiskPoint, tail: f64) -> (Complex64, usize) {
    let w = mobius(u1, z1).to_complex() * mobius(u2, z2).to_complex().conj();
    let rho = w.norm();
    let mut term = (delta(u1, z1) * delta(u2, z2).conj()).inv();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut k = 0;
    while term.norm() / (1.0 - rho) >= tail {
        sum += term;
        term *= w;
        k += 1;
    }
    (sum, k)
}

/// `Σ_k |Φ(u, z)|^{pk} / |Δ(u, z)|^p` summed term by term until the
/// geometric tail bound drops below `tail`.
pub fn direct_power_sum(u: DiskPoint, z: DiskPoint, p: f64, tail: f64) -> (f64, usize) {
    let ratio = mobius(u, z).norm().powf(p);
    let mut term = delta(u, z).norm().powf(-p);
    let mut sum = 0.0;
    let mut k = 0;
    while term / (1.0 - ratio) >= tail {
        sum += term;
        term *= ratio;
        k += 1;
    }
    (sum, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypgeom::q_covariance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p(re: f64, im: f64) -> DiskPoint {
        DiskPoint::new(re, im).unwrap()
    }

    fn brute_degree(policy: &TruncationPolicy) -> usize {
        (0..100_000)
            .find(|&n| {
                policy.safety_factor * tail_rms_bound(policy.target_radius, n) <= policy.tail_tolerance
            })
            .unwrap()
    }

    #[test]
    fn required_degree_examples() {
        let pol = TruncationPolicy { target_radius: 0.5, tail_tolerance: 1e-12, safety_factor: 10.0 };
        assert_eq!(required_degree(&pol).unwrap(), 43);
        let pol = TruncationPolicy { target_radius: 0.1, tail_tolerance: 1e-12, safety_factor: 1.0 };
        let n = required_degree(&pol).unwrap();
        assert!(n <= 13);
        assert_eq!(n, 12);
        let pol = TruncationPolicy { target_radius: 0.5, tail_tolerance: 1.0, safety_factor: 1.0 };
        assert_eq!(required_degree(&pol).unwrap(), 0);
    }

    #[test]
    fn required_degree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let pol = TruncationPolicy {
                target_radius: rng.random_range(0.01..0.999),
                tail_tolerance: 10f64.powf(rng.random_range(-14.0..0.5)),
                safety_factor: rng.random_range(1.0..20.0),
            };
            assert_eq!(required_degree(&pol).unwrap(), brute_degree(&pol), "{pol:?}");
        }
    }

    #[test]
    fn infeasible_policy() {
        assert_eq!(
            required_degree(&TruncationPolicy::new(1.0)),
            Err(SeriesError::PolicyInfeasible(1.0))
        );
        let bad = TruncationPolicy { tail_tolerance: 0.0, ..TruncationPolicy::new(0.5) };
        assert!(matches!(required_degree(&bad), Err(SeriesError::InvalidPolicy(_))));
    }

    #[test]
    fn certified_radius_inverts_required_degree() {
        let pol = TruncationPolicy::new(0.0);
        for n in [5usize, 20, 100, 700] {
            let r = certified_radius(n, &pol);
            assert!(required_degree(&pol.with_radius(r)).unwrap() <= n);
            assert!(required_degree(&pol.with_radius(r + 1e-9)).unwrap() > n);
        }
    }

    #[test]
    fn tail_bound_invariant() {
        let pol = TruncationPolicy::new(0.8);
        let s = TruncatedSeries::sample(CoefficientLaw::ComplexGaussian, &pol, SeededStream::new(1, 2)).unwrap();
        assert!(s.tail_bound() >= tail_rms_bound(s.tail_radius(), s.degree()));
        assert!(pol.safety_factor * s.tail_bound() <= pol.tail_tolerance);
    }

    #[test]
    fn evaluate_examples() {
        let zero = TruncatedSeries::from_coefficients(vec![c(0.0, 0.0); 10], 0.9).unwrap();
        assert_eq!(zero.evaluate(c(0.3, 0.4)).unwrap(), c(0.0, 0.0));

        let n = 30;
        let ones = TruncatedSeries::from_coefficients(vec![c(1.0, 0.0); n + 1], 0.9).unwrap();
        let expected = (1.0 - 0.5f64.powi(n as i32 + 1)) / 0.5;
        assert!((ones.evaluate(c(0.5, 0.0)).unwrap() - c(expected, 0.0)).norm() < 1e-14);

        assert!(matches!(
            ones.evaluate(c(0.95, 0.0)),
            Err(SeriesError::OutOfCertifiedDisk { .. })
        ));
    }

    #[test]
    fn horner_matches_naive_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let coeffs: Vec<_> = (0..=20).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let s = TruncatedSeries::from_coefficients(coeffs.clone(), 0.99).unwrap();
        for _ in 0..10 {
            let z = Complex64::from_polar(rng.random_range(0.0..0.99), rng.random_range(0.0..6.3));
            let naive: Complex64 = coeffs.iter().enumerate().map(|(k, &a)| a * z.powu(k as u32)).sum();
            let h = s.evaluate(z).unwrap();
            let scale: f64 = coeffs.iter().enumerate().map(|(k, a)| a.norm() * z.norm().powi(k as i32)).sum();
            assert!((h - naive).norm() <= 1e-13 * scale);
        }
    }

    #[test]
    fn multi_horner_matches_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let coeffs: Vec<_> = (0..300).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let pts: Vec<_> = (0..37).map(|_| Complex64::from_polar(rng.random_range(0.0..0.97), rng.random_range(0.0..6.3))).collect();
        let (mut v, mut d) = (Vec::new(), Vec::new());
        MultiHorner::default().evaluate(&coeffs, &pts, &mut v, &mut d);
        for (k, &z) in pts.iter().enumerate() {
            let (f, df) = horner_with_derivative(&coeffs, z);
            assert!((f - v[k]).norm() < 1e-12 * (1.0 + f.norm()));
            assert!((df - d[k]).norm() < 1e-12 * (1.0 + df.norm()));
        }
    }

    #[test]
    fn pushforward_examples() {
        let pol = TruncationPolicy::new(0.95);
        let s = TruncatedSeries::sample(CoefficientLaw::ComplexRademacher, &pol, SeededStream::new(3, 3)).unwrap();
        let z = p(0.2, -0.3);
        assert_eq!(s.pushforward_evaluate(DiskPoint::ORIGIN, z).unwrap(), s.evaluate(z.to_complex()).unwrap());

        let one = TruncatedSeries::from_coefficients(vec![c(1.0, 0.0)], 0.99).unwrap();
        let u = p(0.6, 0.5);
        let got = one.pushforward_evaluate(u, z).unwrap();
        let want = (1.0 - u.norm_sqr()).sqrt() / (c(1.0, 0.0) - u.to_complex().conj() * z.to_complex());
        assert!((got - want).norm() < 1e-15);

        let far = p(-0.9, 0.0);
        assert!(matches!(
            s.pushforward_evaluate(p(0.9, 0.0), far),
            Err(SeriesError::OutOfCertifiedDisk { .. })
        ));
    }

    #[test]
    fn alpha_examples() {
        let z = p(0.4, 0.3);
        let a = alpha_coefficients(DiskPoint::ORIGIN, &[z], &[c(1.0, 0.0)], 12).unwrap();
        for (k, ak) in a.iter().enumerate() {
            assert!((ak - z.to_complex().powu(k as u32)).norm() < 1e-15);
        }
        let zeros = alpha_coefficients(p(0.9, 0.0), &[z, p(-0.1, 0.0)], &[c(0.0, 0.0); 2], 5).unwrap();
        assert!(zeros.iter().all(|a| a.norm() == 0.0));
        assert_eq!(
            alpha_coefficients(DiskPoint::ORIGIN, &[z], &[], 3),
            Err(SeriesError::LengthMismatch { points: 1, lambdas: 0 })
        );
    }

    #[test]
    fn alpha_square_sum_matches_q_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let pts = [
                DiskPoint::from_complex(Complex64::from_polar(rng.random_range(0.0..0.7), rng.random_range(0.0..6.3))).unwrap(),
                DiskPoint::from_complex(Complex64::from_polar(rng.random_range(0.0..0.7), rng.random_range(0.0..6.3))).unwrap(),
            ];
            let lambdas = [c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)), c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))];
            let u = DiskPoint::from_complex(Complex64::from_polar(rng.random_range(0.0..0.99), rng.random_range(0.0..6.3))).unwrap();
            let rmax = pts.iter().map(|&z| mobius(u, z).norm()).fold(0.0, f64::max);
            let n = (((1e-12f64 * (1.0 - rmax * rmax)).ln() / (rmax * rmax).ln()).ceil() as usize).max(1);
            let a = alpha_coefficients(u, &pts, &lambdas, n).unwrap();
            let direct: f64 = a.iter().map(|x| x.norm_sqr()).sum();
            let mut closed = c(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    closed += lambdas[i] * lambdas[j].conj() * q_covariance(pts[i], pts[j]);
                }
            }
            assert!(closed.im.abs() < 1e-12);
            assert!((direct - closed.re).abs() < 1e-9, "{direct} vs {closed}");
        }
    }

    #[test]
    fn power_sum_examples() {
        let z = p(0.3, 0.5);
        let v = alpha_power_sum(DiskPoint::ORIGIN, z, 4.0).unwrap();
        let direct: f64 = (0..2000).map(|k| z.norm_sqr().powi(2 * k)).sum();
        assert!((v - direct).abs() < 1e-13);
        assert!((v - 1.0 / (1.0 - z.norm_sqr().powi(2))).abs() < 1e-13);

        let u = p(0.7, -0.2);
        let v = alpha_power_sum(u, DiskPoint::ORIGIN, 4.0).unwrap();
        let s = 1.0 - u.norm_sqr();
        let direct: f64 = s * s * (0..4000).map(|k| u.norm_sqr().powi(2 * k)).sum::<f64>();
        assert!((v - direct).abs() < 1e-13);
        assert!((v - s / (1.0 + u.norm_sqr())).abs() < 1e-13);

        assert!((alpha_power_sum(u, z, 2.0).unwrap() - 1.0 / (1.0 - z.norm_sqr())).abs() < 1e-15);
        assert_eq!(alpha_power_sum(u, z, 3.0), Err(SeriesError::UnsupportedExponent(3.0)));
    }

    #[test]
    fn direct_sums_match_closed_forms() {
        let z1 = p(0.3, 0.0);
        let z2 = p(-0.2, 0.4);
        for m in [0.0, 0.5, 0.9, 0.99, 0.999] {
            let u = p(0.6 * m, -0.8 * m);
            let (cov, _) = direct_covariance_sum(u, z1, u, z2, 1e-13);
            assert!((cov - q_covariance(z1, z2)).norm() < 1e-9, "{m}");
            let (s4, _) = direct_power_sum(u, z1, 4.0, 1e-13);
            assert!((s4 - alpha_power_sum(u, z1, 4.0).unwrap()).abs() < 1e-10);
            let (s2, _) = direct_power_sum(u, z2, 2.0, 1e-13);
            assert!((s2 - alpha_power_sum(u, z2, 2.0).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn fourth_power_sum_decays() {
        let z = p(0.3, 0.0);
        let grid = [0.0, 0.5, 0.9, 0.99, 0.999];
        // along a ray orthogonal to z; towards z the sum first grows
        let values: Vec<f64> = grid.iter().map(|&m| alpha_power_sum(p(0.0, m), z, 4.0).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
        assert!(*values.last().unwrap() < 1e-2);
        let towards = alpha_power_sum(p(0.5, 0.0), z, 4.0).unwrap();
        assert!(towards > alpha_power_sum(DiskPoint::ORIGIN, z, 4.0).unwrap());
    }

    #[test]
    fn certified_prefix_shrinks_with_radius() {
        let pol = TruncationPolicy::new(0.99);
        let s = TruncatedSeries::sample(CoefficientLaw::ComplexGaussian, &pol, SeededStream::new(0, 0)).unwrap();
        let short = s.certified_prefix(0.5).unwrap().len();
        assert_eq!(short, required_degree(&pol.with_radius(0.5)).unwrap() + 1);
        assert_eq!(s.certified_prefix(0.99).unwrap().len(), s.degree() + 1);
        assert!(s.certified_prefix(0.995).is_err());
    }

    #[test]
    fn leading_zeros_extend_the_certified_prefix() {
        let law = CoefficientLaw::sparse(0.05).unwrap();
        let pol = TruncationPolicy::new(0.3);
        let n = required_degree(&pol).unwrap();
        let mut seen_long = false;
        for k in 0..200 {
            let stream = SeededStream::new(7, k);
            let s = TruncatedSeries::sample(law, &pol, stream).unwrap();
            let m = s.coefficients().iter().take_while(|c| c.norm() == 0.0).count();
            assert!(m < s.coefficients().len());
            assert_eq!(s.certified_prefix(0.3).unwrap().len(), m + n + 1);
            // same draws as a plain fill of that length
            let plain = crate::coeffs::sample_coefficients(law, s.coefficients().len(), stream);
            assert_eq!(s.coefficients(), &plain[..]);
            seen_long |= m > n;
        }
        assert!(seen_long, "expected some all-zero plain prefixes at p = 0.05");
        // laws without an atom at 0 are untouched
        let g = TruncatedSeries::sample(CoefficientLaw::ComplexGaussian, &pol, SeededStream::new(7, 0)).unwrap();
        assert_eq!(g.degree(), n);
    }
}
