//! Exact finite-size eigenvalue density of real Wishart correlation
//! matrices with an arbitrary empirical spectrum, together with a Monte
//! Carlo harness and analytic oracles.
//!
//! The density is a twofold integral over (r₁, r₂) ∈ (0, ∞)² of a
//! branched integrand (module [`integrand`]) whose weights are Leibniz
//! derivatives of elementary symmetric polynomials (module [`sympoly`]).
//! Module [`quadrature`] takes its imaginary part in the x + i0 limit and
//! [`density`] exposes points, curves and moment checks.

// `!(a > b)` deliberately rejects NaN along with the failed comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Pairwise (j, k) loops read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod compare;
pub mod density;
pub mod error;
pub mod integrand;
pub mod montecarlo;
pub mod quadrature;
pub mod spectral;
pub mod sympoly;

pub use density::{check_moments, eval_curve, eval_point, DensityCurve, MomentReport};
pub use error::{Error, Result};
pub use montecarlo::{chisq_oracle, histogram_density, sample_ensemble, Ensemble, Histogram, MCConfig};
pub use quadrature::{Backend, QuadratureConfig};
pub use spectral::{Beta, ModelParams, Spectrum};
