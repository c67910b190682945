//! I.i.d. complex coefficient laws with isotropic unit variance, seeded
//! coefficient streams, and empirical moment checks.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default atom probability of [`CoefficientLaw::SparseThreePoint`].
pub const DEFAULT_SPARSE_P: f64 = 0.1;

/// Moments further than this many standard errors from target are flagged.
pub const MOMENT_FLAG_SIGMAS: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("unknown coefficient law `{0}` (expected gaussian, rademacher, uniform or sparse)")]
    UnknownLaw(String),
    #[error("law `{law}` has no parameter `{param}`")]
    UnknownParam { law: &'static str, param: String },
    #[error("sparse law needs 0 < p <= 1, got {0}")]
    SparseProbability(f64),
}

/// A coefficient distribution on ℂ with mean zero, `E(Re X)² = E(Im X)² = 1/2`
/// and `E[Re X · Im X] = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum CoefficientLaw {
    /// Density `π⁻¹ exp(−|z|²)`.
    #[serde(rename = "gaussian")]
    ComplexGaussian,
    /// Uniform on `{(±1 ± i)/√2}`.
    #[serde(rename = "rademacher")]
    ComplexRademacher,
    /// Independent real and imaginary parts, each uniform on `[−√(3/2), √(3/2)]`.
    #[serde(rename = "uniform")]
    UniformSquare,
    /// Zero with probability `1 − p`, otherwise one of `(±1 ± i)/√(2p)`.
    #[serde(rename = "sparse")]
    SparseThreePoint { p: f64 },
}

impl CoefficientLaw {
    pub fn sparse(p: f64) -> Result<Self, LawError> {
        if p > 0.0 && p <= 1.0 {
            Ok(CoefficientLaw::SparseThreePoint { p })
        } else {
            Err(LawError::SparseProbability(p))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CoefficientLaw::ComplexGaussian => "gaussian",
            CoefficientLaw::ComplexRademacher => "rademacher",
            CoefficientLaw::UniformSquare => "uniform",
            CoefficientLaw::SparseThreePoint { .. } => "sparse",
        }
    }

    /// Builds a law from its CLI name and `key=value` parameters.
    pub fn from_spec<'a, I>(name: &str, params: I) -> Result<Self, LawError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut law: CoefficientLaw = name.parse()?;
        for (key, value) in params {
            match (&mut law, key) {
                (CoefficientLaw::SparseThreePoint { p }, "p") => *p = value,
                _ => {
                    return Err(LawError::UnknownParam { law: law.name(), param: key.to_string() })
                }
            }
        }
        if let CoefficientLaw::SparseThreePoint { p } = law {
            return Self::sparse(p);
        }
        Ok(law)
    }

    pub fn builtin() -> [CoefficientLaw; 4] {
        [
            CoefficientLaw::ComplexGaussian,
            CoefficientLaw::ComplexRademacher,
            CoefficientLaw::UniformSquare,
            CoefficientLaw::SparseThreePoint { p: DEFAULT_SPARSE_P },
        ]
    }
}

impl fmt::Display for CoefficientLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientLaw::SparseThreePoint { p } => write!(f, "sparse(p={p})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for CoefficientLaw {
    type Err = LawError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(CoefficientLaw::ComplexGaussian),
            "rademacher" => Ok(CoefficientLaw::ComplexRademacher),
            "uniform" => Ok(CoefficientLaw::UniformSquare),
            "sparse" => Ok(CoefficientLaw::SparseThreePoint { p: DEFAULT_SPARSE_P }),
            _ => Err(LawError::UnknownLaw(s.to_string())),
        }
    }
}

/// Something that draws one complex coefficient at a time.
pub trait Law {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64;

    /// Fills `out` with i.i.d. draws.
    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [Complex64]) {
        for c in out {
            *c = self.draw(rng);
        }
    }
}

const UNIFORM_HALF_WIDTH: f64 = 1.224_744_871_391_589; // √(3/2)

impl Law for CoefficientLaw {
    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        match *self {
            CoefficientLaw::ComplexGaussian => {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
            }
            CoefficientLaw::ComplexRademacher => rademacher_from_bits(rng.next_u32()),
            CoefficientLaw::UniformSquare => Complex64::new(
                rng.random_range(-UNIFORM_HALF_WIDTH..UNIFORM_HALF_WIDTH),
                rng.random_range(-UNIFORM_HALF_WIDTH..UNIFORM_HALF_WIDTH),
            ),
            CoefficientLaw::SparseThreePoint { p } => {
                if rng.random::<f64>() < p {
                    let a = (0.5 / p).sqrt();
                    let x = rademacher_from_bits(rng.next_u32());
                    Complex64::new(x.re.signum() * a, x.im.signum() * a)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
        }
    }

    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [Complex64]) {
        if let CoefficientLaw::ComplexRademacher = self {
            // 32 coefficients per 64-bit word.
            for chunk in out.chunks_mut(32) {
                let mut bits = rng.next_u64();
                for c in chunk {
                    *c = rademacher_from_bits(bits as u32);
                    bits >>= 2;
                }
            }
        } else {
            for c in out {
                *c = self.draw(rng);
            }
        }
    }
}

#[inline]
fn rademacher_from_bits(bits: u32) -> Complex64 {
    let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// FNV-1a; stable across platforms and toolchains.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Descriptor of one reproducible coefficient stream: a ChaCha8 key derived
/// from `master_seed` and the 64-bit ChaCha stream id `stream_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SeededStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        SeededStream { master_seed, stream_index }
    }

    /// Stream for trial `trial` of grid cell `cell` in the named experiment.
    pub fn for_trial(master_seed: u64, experiment: &str, cell: u64, trial: u64) -> Self {
        let index = splitmix64(fnv1a(experiment.as_bytes()) ^ splitmix64(cell ^ splitmix64(trial)));
        SeededStream { master_seed, stream_index: index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// `count` i.i.d. draws from `law` on `stream`.
pub fn sample_coefficients(law: CoefficientLaw, count: usize, stream: SeededStream) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); count];
    law.fill(&mut stream.rng(), &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub name: &'static str,
    pub target: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub samples: usize,
    pub checks: Vec<MomentCheck>,
}

impl MomentReport {
    pub fn all_clear(&self) -> bool {
        self.checks.iter().all(|c| !c.flagged)
    }

    pub fn get(&self, name: &str) -> Option<&MomentCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Empirical mean, Re/Im second moments, Re–Im cross moment and `E|X|²`,
/// each with its standard error.
pub fn verify_moments<L: Law>(law: &L, samples: usize, stream: SeededStream) -> MomentReport {
    let mut rng = stream.rng();
    let draws: Vec<Complex64> = (0..samples).map(|_| law.draw(&mut rng)).collect();
    moment_report(&draws)
}

type Statistic = (&'static str, f64, fn(Complex64) -> f64);

pub fn moment_report(draws: &[Complex64]) -> MomentReport {
    let stats: [Statistic; 6] = [
        ("mean_re", 0.0, |x| x.re),
        ("mean_im", 0.0, |x| x.im),
        ("second_re", 0.5, |x| x.re * x.re),
        ("second_im", 0.5, |x| x.im * x.im),
        ("cross_re_im", 0.0, |x| x.re * x.im),
        ("abs_sq", 1.0, |x| x.norm_sqr()),
    ];
    let n = draws.len() as f64;
    let checks = stats
        .iter()
        .map(|&(name, target, f)| {
            let mean = draws.iter().map(|&x| f(x)).sum::<f64>() / n;
            let var = draws.iter().map(|&x| (f(x) - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let std_error = (var / n).sqrt();
            // absolute floor for constant statistics (std_error == 0)
            let flagged = (mean - target).abs() > MOMENT_FLAG_SIGMAS * std_error + 1e-12;
            MomentCheck { name, target, estimate: mean, std_error, flagged }
        })
        .collect();
    MomentReport { samples: draws.len(), checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_support() {
        let xs = sample_coefficients(CoefficientLaw::ComplexRademacher, 1000, SeededStream::new(1, 0));
        for x in xs {
            assert!((x.norm() - 1.0).abs() < 1e-15);
            assert_eq!(x.re.abs(), FRAC_1_SQRT_2);
            assert_eq!(x.im.abs(), FRAC_1_SQRT_2);
        }
    }

    #[test]
    fn empty_sample() {
        for law in CoefficientLaw::builtin() {
            assert!(sample_coefficients(law, 0, SeededStream::new(9, 9)).is_empty());
        }
    }

    #[test]
    fn gaussian_half_variance() {
        let xs = sample_coefficients(CoefficientLaw::ComplexGaussian, 1_000_000, SeededStream::new(42, 7));
        let m = xs.iter().map(|x| x.re * x.re).sum::<f64>() / xs.len() as f64;
        assert!((m - 0.5).abs() < 3.0 * (2f64.sqrt() / 2.0) / 1e3, "{m}");
    }

    #[test]
    fn reproducible_streams() {
        for law in CoefficientLaw::builtin() {
            let a = sample_coefficients(law, 257, SeededStream::new(5, 12));
            let b = sample_coefficients(law, 257, SeededStream::new(5, 12));
            let c = sample_coefficients(law, 257, SeededStream::new(5, 13));
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn prefix_consistency() {
        // A longer draw extends a shorter one on the same stream.
        for law in CoefficientLaw::builtin() {
            let short = sample_coefficients(law, 40, SeededStream::new(3, 1));
            let long = sample_coefficients(law, 200, SeededStream::new(3, 1));
            assert_eq!(&long[..40], &short[..]);
        }
    }

    #[test]
    fn adjacent_streams_uncorrelated() {
        let n = 100_000;
        for law in CoefficientLaw::builtin() {
            let a = sample_coefficients(law, n, SeededStream::for_trial(77, "corr", 0, 10));
            let b = sample_coefficients(law, n, SeededStream::for_trial(77, "corr", 0, 11));
            let cov = a.iter().zip(&b).map(|(x, y)| x.re * y.re).sum::<f64>() / n as f64;
            let corr = cov / 0.5;
            assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{law}: {corr}");
        }
    }

    #[test]
    fn rademacher_abs_sq_is_one() {
        let r = verify_moments(&CoefficientLaw::ComplexRademacher, 1000, SeededStream::new(0, 0));
        let m = r.get("abs_sq").unwrap();
        assert_eq!(m.std_error, 0.0);
        assert!((m.estimate - 1.0).abs() < 4.0 * f64::EPSILON);
        assert!(!m.flagged);
    }

    #[test]
    fn gaussian_moments_clear() {
        let r = verify_moments(&CoefficientLaw::ComplexGaussian, 100_000, SeededStream::new(2024, 0));
        assert!(r.all_clear(), "{r:?}");
    }

    #[test]
    fn all_builtin_laws_pass_at_one_million() {
        for (i, law) in CoefficientLaw::builtin().into_iter().enumerate() {
            let r = verify_moments(&law, 1_000_000, SeededStream::new(99, i as u64));
            assert!(r.all_clear(), "{law}: {r:?}");
        }
    }

    struct Doubled;

    impl Law for Doubled {
        fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
            CoefficientLaw::ComplexGaussian.draw(rng) * 2f64.sqrt()
        }
    }

    #[test]
    fn mis_scaled_law_is_flagged() {
        let r = verify_moments(&Doubled, 10_000, SeededStream::new(1, 1));
        assert!(r.get("abs_sq").unwrap().flagged);
        assert!(r.get("second_re").unwrap().flagged);
        assert!(!r.all_clear());
    }

    #[test]
    fn law_parsing() {
        assert_eq!("Gaussian".parse::<CoefficientLaw>().unwrap(), CoefficientLaw::ComplexGaussian);
        assert_eq!(
            CoefficientLaw::from_spec("sparse", [("p", 0.25)]).unwrap(),
            CoefficientLaw::SparseThreePoint { p: 0.25 }
        );
        assert!(CoefficientLaw::from_spec("sparse", [("p", 0.0)]).is_err());
        assert!(CoefficientLaw::from_spec("gaussian", [("p", 0.5)]).is_err());
        assert!("cauchy".parse::<CoefficientLaw>().is_err());
    }
}
