//! Zero sets of random power series on the unit disk.
//!
//! The crate samples series `f(X, z) = Σ X_k z^k` with i.i.d. isotropic
//! unit-variance coefficients, pushes them toward the boundary with disk
//! automorphisms, measures zero statistics by Monte Carlo and compares
//! them against Bergman-kernel determinants.
//!
//! * [`hypgeom`]: Möbius maps, the Δ normalizer, closed-form covariances
//!   and kernel determinants.
//! * [`coeffs`]: coefficient laws and seeded streams.
//! * [`series`]: certified truncations, evaluation and α_k sums.
//! * [`roots`]: global root extraction and argument-principle counting.
//! * [`pointproc`]: Monte Carlo estimators.
//! * [`harness`]: experiment configuration, orchestration and records.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod harness;
pub mod hypgeom;
pub mod pointproc;
pub mod roots;
pub mod series;

pub use coeffs::{CoefficientLaw, SeededStream};
pub use hypgeom::DiskPoint;
pub use num_complex::Complex64;
pub use roots::{RootConfig, ZeroSet};
pub use series::{TruncatedSeries, TruncationPolicy};
