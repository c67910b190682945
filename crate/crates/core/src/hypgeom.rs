//! Möbius maps of the unit disk, the Δ normalizer, the closed-form
//! covariances of the pushed-forward series, and the Bergman-type kernel
//! with its correlation determinants.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest configuration handled by [`kernel_determinant`].
pub const MAX_KERNEL_POINTS: usize = 12;

/// Two points closer than this are treated as the same point.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({re}, {im}) is not strictly inside the unit disk")]
    OutsideDisk { re: f64, im: f64 },
    #[error("points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("kernel determinant needs between 1 and {MAX_KERNEL_POINTS} points, got {0}")]
    PointCount(usize),
    #[error("kernel normalization must be positive and finite, got {0}")]
    Normalization(f64),
}

/// A complex number strictly inside the open unit disk.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct DiskPoint {
    re: f64,
    im: f64,
}

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Result<Self, GeometryError> {
        let r2 = re * re + im * im;
        if r2.is_finite() && r2 < 1.0 {
            Ok(DiskPoint { re, im })
        } else {
            Err(GeometryError::OutsideDisk { re, im })
        }
    }

    pub fn real(re: f64) -> Result<Self, GeometryError> {
        Self::new(re, 0.0)
    }

    pub fn from_complex(z: Complex64) -> Result<Self, GeometryError> {
        Self::new(z.re, z.im)
    }

    /// Wraps a value known to lie in the disk (e.g. the image of a disk
    /// point under a disk automorphism).
    pub(crate) fn from_complex_unchecked(z: Complex64) -> Self {
        debug_assert!(z.norm_sqr() < 1.0 + 1e-12);
        DiskPoint { re: z.re, im: z.im }
    }

    pub fn re(&self) -> f64 {
        self.re
    }

    pub fn im(&self) -> f64 {
        self.im
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

impl std::ops::Neg for DiskPoint {
    type Output = DiskPoint;

    fn neg(self) -> Self {
        DiskPoint { re: -self.re, im: -self.im }
    }
}

impl fmt::Debug for DiskPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiskPoint({}, {})", self.re, self.im)
    }
}

impl From<DiskPoint> for Complex64 {
    fn from(p: DiskPoint) -> Self {
        p.to_complex()
    }
}

impl From<DiskPoint> for [f64; 2] {
    fn from(p: DiskPoint) -> Self {
        [p.re, p.im]
    }
}

impl TryFrom<[f64; 2]> for DiskPoint {
    type Error = GeometryError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        DiskPoint::new(v[0], v[1])
    }
}

/// The disk automorphism `z ↦ (z − u)/(1 − ū z)`.
pub fn mobius(u: DiskPoint, z: DiskPoint) -> DiskPoint {
    DiskPoint::from_complex_unchecked(mobius_c(u.to_complex(), z.to_complex()))
}

/// Inverse of [`mobius`] in its second argument: `ξ` with `mobius(u, ξ) = w`.
pub fn mobius_inverse(u: DiskPoint, w: DiskPoint) -> DiskPoint {
    mobius(-u, w)
}

#[inline]
pub(crate) fn mobius_c(u: Complex64, z: Complex64) -> Complex64 {
    (z - u) / (Complex64::new(1.0, 0.0) - u.conj() * z)
}

/// Derivative of `z ↦ mobius(u, z)`: `(1 − |u|²)/(1 − ū z)²`.
#[inline]
pub(crate) fn mobius_derivative_c(u: Complex64, z: Complex64) -> Complex64 {
    let d = Complex64::new(1.0, 0.0) - u.conj() * z;
    (1.0 - u.norm_sqr()) / (d * d)
}

/// `Δ(u, z) = (1 − ū z)/√(1 − |u|²)`.
pub fn delta(u: DiskPoint, z: DiskPoint) -> Complex64 {
    delta_c(u.to_complex(), z.to_complex())
}

#[inline]
pub(crate) fn delta_c(u: Complex64, z: Complex64) -> Complex64 {
    (Complex64::new(1.0, 0.0) - u.conj() * z) / (1.0 - u.norm_sqr()).sqrt()
}

/// The u-independent normalized covariance `1/(1 − z1 z̄2)`.
pub fn q_covariance(z1: DiskPoint, z2: DiskPoint) -> Complex64 {
    let z1 = z1.to_complex();
    let z2 = z2.to_complex();
    (Complex64::new(1.0, 0.0) - z1 * z2.conj()).inv()
}

/// Covariance of `f(X, Φ(u1, z1))/Δ(u1, z1)` and `f(X, Φ(u2, z2))/Δ(u2, z2)`
/// for unit-variance isotropic coefficients.
pub fn cross_covariance(
    u1: DiskPoint,
    z1: DiskPoint,
    u2: DiskPoint,
    z2: DiskPoint,
) -> Complex64 {
    let w1 = mobius(u1, z1).to_complex();
    let w2 = mobius(u2, z2).to_complex();
    let d1 = delta(u1, z1);
    let d2 = delta(u2, z2);
    (d1 * d2.conj() * (Complex64::new(1.0, 0.0) - w1 * w2.conj())).inv()
}

/// `c/(1 − z w̄)²`.
pub fn bergman_kernel(z: DiskPoint, w: DiskPoint, c: f64) -> Complex64 {
    let q = q_covariance(z, w);
    q * q * c
}

/// `|Φ(u1, u2)|`, symmetric in its arguments; tends to 1 exactly when the
/// hyperbolic distance diverges.
pub fn pseudo_hyperbolic_distance(u1: DiskPoint, u2: DiskPoint) -> f64 {
    mobius(u1, u2).norm()
}

/// Image of the closed ball `|z − center| ≤ radius` under `Φ(u, ·)`,
/// returned as (center, radius) of the image disk.
///
/// Requires the ball to lie inside the unit disk, so the pole `1/ū` stays
/// outside it.
pub fn image_disk(u: DiskPoint, center: DiskPoint, radius: f64) -> (Complex64, f64) {
    let uc = u.to_complex();
    let c = center.to_complex();
    if uc.norm_sqr() == 0.0 {
        return (c, radius);
    }
    // The point symmetric to the pole with respect to the circle maps to
    // the image center.
    let pole = uc.conj().inv();
    let mirrored = c + radius * radius / (pole - c).conj();
    let w0 = mobius_c(uc, mirrored);
    let rho = (mobius_c(uc, c + radius) - w0).norm();
    (w0, rho)
}

/// Largest modulus of `Φ(u, z)` over the closed ball `|z − center| ≤ radius`.
pub fn image_max_modulus(u: DiskPoint, center: DiskPoint, radius: f64) -> f64 {
    let (w0, rho) = image_disk(u, center, radius);
    w0.norm() + rho
}

/// Hermitian kernel matrix `c/(1 − z_i z̄_j)²` on a finite configuration.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    points: Vec<DiskPoint>,
    normalization: f64,
    entries: Vec<Complex64>,
}

impl KernelMatrix {
    pub fn new(points: &[DiskPoint], c: f64) -> Result<Self, GeometryError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(GeometryError::Normalization(c));
        }
        let n = points.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i..n {
                let k = bergman_kernel(points[i], points[j], c);
                entries[i * n + j] = k;
                entries[j * n + i] = k.conj();
            }
            entries[i * n + i].im = 0.0;
        }
        Ok(KernelMatrix { points: points.to_vec(), normalization: c, entries })
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[DiskPoint] {
        &self.points
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim() + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entry(i, i).re).sum()
    }

    /// Pivots of a symmetric elimination that always eliminates the
    /// largest remaining diagonal entry. Their product is the determinant;
    /// for a PSD matrix they are all non-negative.
    pub fn pivots(&self) -> Vec<f64> {
        let n = self.dim();
        let mut a = self.entries.clone();
        let mut active: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        while !active.is_empty() {
            let (slot, &p) = active
                .iter()
                .enumerate()
                .max_by(|(_, &x), (_, &y)| a[x * n + x].re.total_cmp(&a[y * n + y].re))
                .expect("non-empty");
            let piv = a[p * n + p].re;
            pivots.push(piv);
            active.swap_remove(slot);
            if piv <= 0.0 {
                // Remaining Schur complement is numerically singular.
                pivots.extend(std::iter::repeat_n(0.0, active.len()));
                break;
            }
            for &i in &active {
                let l = a[i * n + p] / piv;
                for &j in &active {
                    let update = l * a[p * n + j];
                    a[i * n + j] -= update;
                }
                a[i * n + i].im = 0.0;
            }
        }
        pivots
    }

    pub fn determinant(&self) -> f64 {
        self.pivots().iter().product()
    }

    /// All elimination pivots at or above `−tol_rel × trace`.
    pub fn is_positive_semidefinite(&self, tol_rel: f64) -> bool {
        let tol = tol_rel * self.trace();
        self.pivots().iter().all(|&p| p >= -tol)
    }
}

/// `det(c/(1 − z_i z̄_j)²)` for 1 ≤ n ≤ 12 pairwise distinct points.
pub fn kernel_determinant(points: &[DiskPoint], c: f64) -> Result<f64, GeometryError> {
    let n = points.len();
    if n == 0 || n > MAX_KERNEL_POINTS {
        return Err(GeometryError::PointCount(n));
    }
    for i in 0..n {
        for j in i + 1..n {
            if (points[i].to_complex() - points[j].to_complex()).norm() < DUPLICATE_TOLERANCE {
                return Err(GeometryError::DuplicatePoints(i, j));
            }
        }
    }
    Ok(KernelMatrix::new(points, c)?.determinant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(re: f64, im: f64) -> DiskPoint {
        DiskPoint::new(re, im).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn random_point(rng: &mut ChaCha8Rng, rmax: f64) -> DiskPoint {
        let r = rmax * rng.random::<f64>().sqrt();
        let t = std::f64::consts::TAU * rng.random::<f64>();
        p(r * t.cos(), r * t.sin())
    }

    #[test]
    fn construction_rejects_boundary_and_outside() {
        assert!(DiskPoint::new(1.0, 0.0).is_err());
        assert!(DiskPoint::new(0.6, 0.8).is_err());
        assert!(DiskPoint::new(f64::NAN, 0.0).is_err());
        assert!(DiskPoint::new(0.6, 0.79).is_ok());
    }

    #[test]
    fn mobius_examples() {
        let z = p(0.3, -0.4);
        assert_eq!(mobius(DiskPoint::ORIGIN, z), z);
        assert!(mobius(z, z).norm() < 1e-16);
        let w = mobius(p(0.5, 0.0), DiskPoint::ORIGIN);
        assert_eq!(w.to_complex(), Complex64::new(-0.5, 0.0));
    }

    #[test]
    fn mobius_inverse_examples() {
        let u = p(0.7, 0.2);
        let z = p(-0.1, 0.55);
        assert!(close(mobius_inverse(u, mobius(u, z)).into(), z.into(), 1e-14));
        assert_eq!(mobius_inverse(DiskPoint::ORIGIN, z), z);
        let back = mobius_inverse(p(0.5, 0.0), p(-0.5, 0.0));
        assert!(back.norm() < 1e-16);
    }

    #[test]
    fn delta_examples() {
        let z = p(0.2, 0.6);
        assert_eq!(delta(DiskPoint::ORIGIN, z), Complex64::new(1.0, 0.0));
        let u = p(0.6, -0.3);
        let expected = 1.0 / (1.0 - u.norm_sqr()).sqrt();
        assert!(close(delta(u, DiskPoint::ORIGIN), Complex64::new(expected, 0.0), 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let u = random_point(&mut rng, 0.999);
            let z = random_point(&mut rng, 0.999);
            let m = delta(u, z).norm();
            let s = (1.0 - u.norm_sqr()).sqrt();
            assert!(m >= (1.0 - z.norm()) / s * (1.0 - 1e-12));
            assert!(m <= (1.0 + z.norm()) / s * (1.0 + 1e-12));
        }
    }

    #[test]
    fn q_covariance_examples() {
        assert_eq!(q_covariance(DiskPoint::ORIGIN, p(0.4, 0.4)), Complex64::new(1.0, 0.0));
        assert!(close(q_covariance(p(0.5, 0.0), p(0.5, 0.0)), Complex64::new(4.0 / 3.0, 0.0), 1e-15));
    }

    #[test]
    fn cross_covariance_reductions() {
        let u = p(0.8, 0.1);
        let z1 = p(0.3, 0.0);
        let z2 = p(-0.2, 0.4);
        assert!(close(cross_covariance(u, z1, u, z2), q_covariance(z1, z2), 1e-12));
        let o = DiskPoint::ORIGIN;
        let direct = (Complex64::new(1.0, 0.0) - z1.to_complex() * z2.to_complex().conj()).inv();
        assert!(close(cross_covariance(o, z1, o, z2), direct, 1e-15));
    }

    #[test]
    fn bergman_examples() {
        assert_eq!(bergman_kernel(DiskPoint::ORIGIN, DiskPoint::ORIGIN, 2.5), Complex64::new(2.5, 0.0));
        let z = p(0.1, 0.7);
        let w = p(-0.5, 0.2);
        assert!(close(bergman_kernel(z, w, 1.3), bergman_kernel(w, z, 1.3).conj(), 1e-15));
        let h = p(0.5, 0.0);
        assert!(close(bergman_kernel(h, h, 1.0), Complex64::new(16.0 / 9.0, 0.0), 1e-14));
    }

    #[test]
    fn determinant_small_cases() {
        assert!((kernel_determinant(&[DiskPoint::ORIGIN], 1.0).unwrap() - 1.0).abs() < 1e-15);
        for c in [1.0, 2.0, std::f64::consts::PI] {
            let d = kernel_determinant(&[DiskPoint::ORIGIN, p(0.5, 0.0)], c).unwrap();
            assert!((d - 7.0 * c * c / 9.0).abs() < 1e-13 * c * c, "{d}");
        }
    }

    #[test]
    fn determinant_rejects_duplicates_and_bad_sizes() {
        let z = p(0.2, 0.1);
        assert_eq!(
            kernel_determinant(&[z, p(0.3, 0.0), z], 1.0),
            Err(GeometryError::DuplicatePoints(0, 2))
        );
        assert_eq!(kernel_determinant(&[], 1.0), Err(GeometryError::PointCount(0)));
        let many: Vec<_> = (0..13).map(|k| p(0.05 * k as f64, 0.0)).collect();
        assert_eq!(kernel_determinant(&many, 1.0), Err(GeometryError::PointCount(13)));
        assert!(matches!(kernel_determinant(&[z], 0.0), Err(GeometryError::Normalization(_))));
    }

    #[test]
    fn kernel_matrix_is_hermitian() {
        let pts = [p(0.1, 0.2), p(-0.5, 0.3), p(0.0, -0.8)];
        let k = KernelMatrix::new(&pts, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k.entry(i, j), k.entry(j, i).conj());
            }
        }
    }

    #[test]
    fn image_disk_matches_sampled_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let u = random_point(&mut rng, 0.995);
            let c = random_point(&mut rng, 0.7);
            let r = 0.25 * rng.random::<f64>() * (1.0 - c.norm());
            let (w0, rho) = image_disk(u, c, r);
            for k in 0..32 {
                let t = std::f64::consts::TAU * k as f64 / 32.0;
                let z = c.to_complex() + Complex64::from_polar(r, t);
                let w = mobius_c(u.to_complex(), z);
                assert!(((w - w0).norm() - rho).abs() < 1e-10 * (1.0 + rho));
            }
        }
    }

    #[test]
    fn mobius_modulus_approaches_one() {
        let z = p(0.3, 0.0);
        for m in [0.99, 0.995, 0.999, 0.9999] {
            for k in 0..8 {
                let t = std::f64::consts::TAU * k as f64 / 8.0;
                let u = p(m * t.cos(), m * t.sin());
                assert!(mobius(u, z).norm() >= 1.0 - 3.0 * (1.0 - m));
            }
        }
    }

    #[test]
    fn pseudo_distance_examples() {
        let u = p(0.4, -0.7);
        assert!(pseudo_hyperbolic_distance(u, u) < 1e-16);
        assert!((pseudo_hyperbolic_distance(DiskPoint::ORIGIN, u) - u.norm()).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = random_point(&mut rng, 0.99);
            let b = random_point(&mut rng, 0.99);
            let d1 = pseudo_hyperbolic_distance(a, b);
            let d2 = pseudo_hyperbolic_distance(b, a);
            assert!((d1 - d2).abs() < 1e-14);
            assert!((0.0..1.0).contains(&d1));
        }
    }

    fn arb_point(rmax: f64) -> impl Strategy<Value = DiskPoint> {
        (0.0..rmax, 0.0..std::f64::consts::TAU)
            .prop_map(|(r, t): (f64, f64)| DiskPoint::new(r * t.cos(), r * t.sin()).unwrap())
    }

    proptest! {
        #[test]
        fn mobius_roundtrip(u in arb_point(0.999), w in arb_point(0.999)) {
            let back = mobius(u, mobius(-u, w));
            prop_assert!((back.to_complex() - w.to_complex()).norm() < 1e-13);
        }

        #[test]
        fn kernel_matrix_psd(pts in proptest::collection::vec(arb_point(0.95), 1..=8)) {
            let k = KernelMatrix::new(&pts, 1.0).unwrap();
            prop_assert!(k.is_positive_semidefinite(1e-10));
        }
    }
}
