//! Root finders against a companion-matrix eigenvalue oracle and against
//! each other.

use hyperzero::coeffs::{sample_coefficients, SeededStream};
use hyperzero::hypgeom::{image_max_modulus, mobius_inverse};
use hyperzero::roots::{count_zeros_in_disk, count_zeros_jittered, find_roots};
use hyperzero::series::{certified_radius, TruncationPolicy};
use hyperzero::{CoefficientLaw, Complex64, DiskPoint, RootConfig, TruncatedSeries};
use nalgebra::DMatrix;

/// Eigenvalues of the companion matrix of `Σ c_k z^k`.
fn companion_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -coeffs[i] / lead;
    }
    m.schur().eigenvalues().expect("complex Schur form is triangular").iter().copied().collect()
}

fn gaussian(degree: usize, seed: u64) -> Vec<Complex64> {
    sample_coefficients(CoefficientLaw::ComplexGaussian, degree + 1, SeededStream::new(seed, 0))
}

#[test]
fn matches_companion_eigenvalues() {
    let cfg = RootConfig::default();
    for seed in 0..30 {
        let degree = 10 + (seed as usize * 7) % 41;
        let coeffs = gaussian(degree, seed);
        let radius = 0.8;
        let series = TruncatedSeries::from_coefficients(coeffs.clone(), radius).unwrap();
        let zs = find_roots(&series, radius, &cfg).unwrap();
        // ignore eigenvalues too close to the search circle to classify
        let oracle: Vec<Complex64> =
            companion_roots(&coeffs).into_iter().filter(|z| (z.norm() - radius).abs() > 1e-6).collect();
        let inside: Vec<&Complex64> = oracle.iter().filter(|z| z.norm() < radius).collect();
        let found: Vec<Complex64> =
            zs.zeros.iter().map(|z| z.location.to_complex()).filter(|z| (z.norm() - radius).abs() > 1e-6).collect();
        assert_eq!(found.len(), inside.len(), "seed {seed} degree {degree}");
        for z in inside {
            let nearest = found.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-8, "seed {seed}: {z} off by {nearest}");
        }
    }
}

#[test]
fn pullback_of_roots_matches_pushed_forward_counts() {
    let cfg = RootConfig::default();
    let u = DiskPoint::new(0.6, -0.3).unwrap();
    let balls = [(DiskPoint::new(0.1, 0.1).unwrap(), 0.25), (DiskPoint::new(-0.3, 0.2).unwrap(), 0.15)];
    let reach = balls.iter().map(|&(c, r)| image_max_modulus(u, c, r * 1.01)).fold(0.0, f64::max);
    let policy = TruncationPolicy::new(reach);
    for seed in 0..40 {
        let series = TruncatedSeries::sample(CoefficientLaw::ComplexGaussian, &policy, SeededStream::new(seed, 1)).unwrap();
        let zs = find_roots(&series, reach, &cfg).unwrap();
        let pulled: Vec<Complex64> = zs.zeros.iter().map(|z| mobius_inverse(u, z.location).to_complex()).collect();
        for (k, &(center, r)) in balls.iter().enumerate() {
            let bc = count_zeros_jittered(&series, center, r, Some(u), &cfg, seed * 10 + k as u64).unwrap();
            let from_roots = pulled.iter().filter(|z| (*z - center.to_complex()).norm() < bc.radius).count();
            assert_eq!(bc.count, from_roots, "seed {seed} ball {k}");
        }
    }
}

#[test]
fn counts_agree_on_certified_gaussian_truncations() {
    let cfg = RootConfig::default();
    let policy = TruncationPolicy::new(0.5);
    for seed in 0..100u64 {
        let degree = 20 + (seed as usize * 37) % 181;
        let radius = certified_radius(degree, &policy);
        let series = TruncatedSeries::from_coefficients(gaussian(degree, 1000 + seed), radius).unwrap();
        let zs = find_roots(&series, radius, &cfg).unwrap();
        for z in &zs.zeros {
            assert!(z.residual <= cfg.residual_tolerance * zs.coefficient_scale);
            assert!(z.location.norm() <= radius);
        }
        let r = 0.9 * radius;
        match count_zeros_in_disk(&series, DiskPoint::ORIGIN, r, None, &cfg) {
            Ok(n) => assert_eq!(n, zs.count_in_ball(Complex64::new(0.0, 0.0), r), "seed {seed}"),
            // a zero close to the contour: the jittered count must still agree
            Err(_) => {
                let bc = count_zeros_jittered(&series, DiskPoint::ORIGIN, r, None, &cfg, seed).unwrap();
                assert!(bc.attempts > 1);
                assert_eq!(bc.count, zs.count_in_ball(Complex64::new(0.0, 0.0), bc.radius), "seed {seed}");
            }
        }
    }
}

#[test]
fn roots_of_unity_shifted() {
    let cfg = RootConfig::default();
    for n in [4usize, 7, 16, 40] {
        let a = Complex64::from_polar(0.7f64.powi(n as i32), 1.0);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
        coeffs[0] = -a;
        coeffs[n] = Complex64::new(1.0, 0.0);
        let series = TruncatedSeries::from_coefficients(coeffs, 0.95).unwrap();
        let zs = find_roots(&series, 0.95, &cfg).unwrap();
        assert_eq!(zs.count(), n);
        for z in &zs.zeros {
            let w = z.location.to_complex();
            assert!((w.powu(n as u32) - a).norm() < 1e-12);
            assert!((w.norm() - 0.7).abs() < 1e-10);
        }
    }
}
