//! The two-variable integrand of the real-case density formula.
//!
//! After the δ-derivatives in ρ₂₂ are moved onto the integrand, what remains
//! is, with G(r) = r^{(n-1)/2} e^{-r} ∏_l (x⁺ - 2Λ_l r)^{-1/2},
//!
//! ```text
//! |r₁ - r₂| G(r₁) G(r₂) [ A / (r₁ r₂)
//!     + Σ_j B_j ( 1 / ((x⁺ - 2Λ_j r₂) r₁) + 1 / ((x⁺ - 2Λ_j r₁) r₂) )
//!     + Σ_{j≠k} C_jk / ((x⁺ - 2Λ_j r₁)(x⁺ - 2Λ_k r₂)) ]
//! ```
//!
//! where A, B_j, C_jk are the Leibniz weights of E_{p-1}, E_{p-2;j} and
//! E_{p-3;j,k} at orders n, n-1, n-2, each carrying the normalisation
//! constant, (-1)^order and its (2Λ)² factors. The density is the imaginary
//! part of the quadrant integral in the limit x⁺ → x + i0.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ModelParams, Spectrum, Usage};
use crate::sympoly::{leibniz_at_zero, ln_factorial, q_esym_derivative, SignedLog};

/// Extra factor on the normalisation constant. The eigenvalue integral runs
/// over ordered (r₁, r₂) while the quadrature covers the whole quadrant.
/// Pinned by the p = 1 chi-squared oracle.
pub const QUADRANT_FACTOR: f64 = 0.5;

/// Default half-width, relative to x, inside which a simple pole is flagged.
pub const DEFAULT_POLE_WIDTH: f64 = 1e-8;

/// Raw Leibniz weights dᵐ/dtᵐ[e^{2t} E(t)] at t = 0, before constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeights {
    /// E_{p-1}, order n.
    pub leading: SignedLog,
    /// E_{p-2;j}, order n - 1, one per j.
    pub single: Vec<SignedLog>,
    /// E_{p-3;j,k}, order n - 2, row-major p x p with a zero diagonal.
    pub pair: Vec<SignedLog>,
}

/// Computes the Leibniz weights of the three derivative orders.
pub fn term_weights(x: f64, spectrum: &Spectrum, params: &ModelParams) -> Result<TermWeights> {
    let p = spectrum.len();
    let n = params.n;
    let leading = leibniz_at_zero(&q_esym_derivative(x, spectrum, &[])?, n);
    let single = (0..p)
        .map(|j| Ok(leibniz_at_zero(&q_esym_derivative(x, spectrum, &[j])?, n - 1)))
        .collect::<Result<Vec<_>>>()?;
    let mut pair = vec![SignedLog::ZERO; p * p];
    for j in 0..p {
        for k in 0..p {
            if j != k {
                pair[j * p + k] = leibniz_at_zero(&q_esym_derivative(x, spectrum, &[j, k])?, n - 2);
            }
        }
    }
    Ok(TermWeights { leading, single, pair })
}

/// ln |c|, with c = QUADRANT_FACTOR · (-1)^{n+1} / (4π p (n-2)!); the sign is
/// returned separately.
fn normalisation(params: &ModelParams) -> SignedLog {
    let n = params.n;
    let ln_mag =
        QUADRANT_FACTOR.ln() - (4.0 * std::f64::consts::PI * params.p as f64).ln() - ln_factorial((n - 2) as u64);
    SignedLog::from_parts(if (n + 1).is_multiple_of(2) { 1 } else { -1 }, ln_mag)
}

fn parity(m: usize) -> SignedLog {
    if m.is_multiple_of(2) {
        SignedLog::ONE
    } else {
        -SignedLog::ONE
    }
}

/// Weights with the constant, the (-1)^order from the δ-derivatives and the
/// (2Λ)² factors folded in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedWeights {
    pub leading: SignedLog,
    pub single: Vec<SignedLog>,
    pub pair: Vec<SignedLog>,
}

impl FoldedWeights {
    fn new(raw: &TermWeights, spectrum: &Spectrum, params: &ModelParams) -> Self {
        let c = normalisation(params);
        let n = params.n;
        let p = spectrum.len();
        let four_l2: Vec<SignedLog> = spectrum
            .values()
            .iter()
            .map(|l| SignedLog::from_f64(4.0 * l * l))
            .collect();
        let leading = c * parity(n) * raw.leading;
        let single = (0..p).map(|j| c * parity(n - 1) * four_l2[j] * raw.single[j]).collect();
        let pair = (0..p * p)
            .map(|jk| {
                let (j, k) = (jk / p, jk % p);
                if j == k {
                    SignedLog::ZERO
                } else {
                    c * parity(n - 2) * four_l2[j] * four_l2[k] * raw.pair[jk]
                }
            })
            .collect();
        FoldedWeights { leading, single, pair }
    }

    /// Largest log-magnitude among the weights.
    pub fn log_scale(&self) -> f64 {
        std::iter::once(&self.leading)
            .chain(&self.single)
            .chain(&self.pair)
            .filter(|w| !w.is_zero())
            .map(|w| w.logmag())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Real integrand value at (r₁, r₂) in the x⁺ → x + i0 limit. The complex
/// value is `magnitude · (-i)^halfpole_crossings`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchedValue {
    pub magnitude: SignedLog,
    pub halfpole_crossings: u32,
    pub pole_indicator: bool,
}

/// A complex number times e^{log_scale}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledComplex {
    pub mantissa: Complex64,
    pub log_scale: f64,
}

impl ScaledComplex {
    pub fn re(&self) -> SignedLog {
        SignedLog::from_f64(self.mantissa.re) * SignedLog::exp(self.log_scale)
    }

    pub fn im(&self) -> SignedLog {
        SignedLog::from_f64(self.mantissa.im) * SignedLog::exp(self.log_scale)
    }
}

#[derive(Debug, Clone)]
pub struct IntegrandContext {
    x: f64,
    spectrum: Spectrum,
    params: ModelParams,
    singular: Vec<f64>,
    raw: TermWeights,
    folded: FoldedWeights,
    pole_width: f64,
}

impl IntegrandContext {
    pub fn new(x: f64, spectrum: &Spectrum, params: &ModelParams) -> Result<Self> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::Domain(format!("x must be positive and finite, got {x}")));
        }
        if spectrum.len() != params.p {
            return Err(Error::DimensionMismatch {
                expected: params.p,
                got: spectrum.len(),
            });
        }
        params.check(Usage::Analytic)?;
        let raw = term_weights(x, spectrum, params)?;
        let folded = FoldedWeights::new(&raw, spectrum, params);
        Ok(IntegrandContext {
            x,
            spectrum: spectrum.clone(),
            params: *params,
            singular: spectrum.values().iter().map(|l| x / (2.0 * l)).collect(),
            raw,
            folded,
            pole_width: DEFAULT_POLE_WIDTH,
        })
    }

    pub fn with_pole_width(mut self, width: f64) -> Self {
        self.pole_width = width;
        self
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn lambdas(&self) -> &[f64] {
        self.spectrum.values()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn p(&self) -> usize {
        self.params.p
    }

    /// Power of r in G(r), (n-1)/2.
    pub fn radial_power(&self) -> f64 {
        (self.params.n as f64 - 1.0) / 2.0
    }

    /// s_j = x / (2Λ_j), increasing.
    pub fn singular_points(&self) -> &[f64] {
        &self.singular
    }

    pub fn term_weights(&self) -> &TermWeights {
        &self.raw
    }

    pub fn folded_weights(&self) -> &FoldedWeights {
        &self.folded
    }

    pub fn pole_width(&self) -> f64 {
        self.pole_width
    }

    /// The real integrand with its branch bookkeeping.
    pub fn evaluate(&self, r1: f64, r2: f64) -> Result<BranchedValue> {
        if !(r1 > 0.0 && r2 > 0.0) {
            return Err(Error::Domain(format!("r1 = {r1}, r2 = {r2} must be positive")));
        }
        let x = self.x;
        let lambdas = self.lambdas();
        let d1: Vec<f64> = lambdas.iter().map(|l| x - 2.0 * l * r1).collect();
        let d2: Vec<f64> = lambdas.iter().map(|l| x - 2.0 * l * r2).collect();
        if d1.iter().chain(&d2).any(|&d| d == 0.0) {
            return Err(Error::Domain(format!("({r1}, {r2}) lies on a branch point")));
        }
        let halfpole_crossings = d1.iter().chain(&d2).filter(|&&d| d < 0.0).count() as u32;
        let pole_indicator = d1.iter().chain(&d2).any(|d| d.abs() < self.pole_width * x);

        let common_log = (r1 - r2).abs().ln() + self.radial_power() * (r1.ln() + r2.ln())
            - r1
            - r2
            - 0.5 * d1.iter().chain(&d2).map(|d| d.abs().ln()).sum::<f64>();
        if (r1 - r2).abs() == 0.0 {
            return Ok(BranchedValue {
                magnitude: SignedLog::ZERO,
                halfpole_crossings,
                pole_indicator,
            });
        }

        let w = &self.folded;
        let p = self.p();
        let inv = |v: f64| SignedLog::from_f64(1.0 / v);
        let mut terms = vec![w.leading * inv(r1 * r2)];
        for j in 0..p {
            terms.push(w.single[j] * (inv(d2[j] * r1) + inv(d1[j] * r2)));
            for k in 0..p {
                if j != k {
                    terms.push(w.pair[j * p + k] * inv(d1[j] * d2[k]));
                }
            }
        }
        let bracket: SignedLog = terms.into_iter().sum();
        Ok(BranchedValue {
            magnitude: SignedLog::exp(common_log) * bracket,
            halfpole_crossings,
            pole_indicator,
        })
    }

    /// The unregularised integrand at x + iε with principal-branch roots.
    pub fn evaluate_complex(&self, r1: f64, r2: f64, eps: f64) -> Result<ScaledComplex> {
        if !(r1 > 0.0 && r2 > 0.0) {
            return Err(Error::Domain(format!("r1 = {r1}, r2 = {r2} must be positive")));
        }
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
        }
        let xp = Complex64::new(self.x, eps);
        let lambdas = self.lambdas();
        let z1: Vec<Complex64> = lambdas.iter().map(|l| xp - 2.0 * l * r1).collect();
        let z2: Vec<Complex64> = lambdas.iter().map(|l| xp - 2.0 * l * r2).collect();
        let roots: Complex64 = z1.iter().chain(&z2).map(|z| z.sqrt()).product();
        let log_scale = (r1 - r2).abs().ln() + self.radial_power() * (r1.ln() + r2.ln()) - r1 - r2;

        let w = &self.folded;
        let wscale = w.log_scale();
        let f = |s: SignedLog| s.to_f64_scaled(wscale);
        let p = self.p();
        let mut bracket = Complex64::new(f(w.leading) / (r1 * r2), 0.0);
        for j in 0..p {
            bracket += f(w.single[j]) * (1.0 / (z2[j] * r1) + 1.0 / (z1[j] * r2));
            for k in 0..p {
                if j != k {
                    bracket += f(w.pair[j * p + k]) / (z1[j] * z2[k]);
                }
            }
        }
        Ok(ScaledComplex {
            mantissa: bracket / roots,
            log_scale: log_scale + wscale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(x: f64, lambdas: &[f64], n: usize) -> IntegrandContext {
        let s = Spectrum::new(lambdas).unwrap();
        IntegrandContext::new(x, &s, &ModelParams::real(lambdas.len(), n)).unwrap()
    }

    #[test]
    fn weights_for_single_series() {
        let c = ctx(1.0, &[1.0], 4);
        let w = c.term_weights();
        assert!((w.leading.to_f64() - 16.0).abs() < 1e-13);
        // no j with a second index to differentiate, no pairs at all
        assert!(w.single[0].is_zero());
        assert!(w.pair.iter().all(|v| v.is_zero()));
    }

    #[test]
    fn weights_for_two_series() {
        let c = ctx(1.0, &[1.0, 0.5], 5);
        let w = c.term_weights();
        // E_{p-2;j} = E_0 = 1 for p = 2, order n - 1 = 4: 2⁴
        assert!((w.single[0].to_f64() - 16.0).abs() < 1e-12);
        assert!((w.single[1].to_f64() - 16.0).abs() < 1e-12);
        // E_{p-1} = Q₁ + Q₂ = 2 - 3t, order 5: 2⁵·2 + 5·2⁴·(-3)
        assert!((w.leading.to_f64() - (64.0 - 240.0)).abs() < 1e-11);
        // E_{p-3;j,k} is empty for p = 2
        assert!(w.pair.iter().all(|v| v.is_zero()));
    }

    #[test]
    fn weights_for_three_series() {
        let c = ctx(2.0, &[1.0, 0.5, 0.25], 6);
        let w = c.term_weights();
        // E_{0;j,k} = 1 at order n - 2 = 4
        for j in 0..3 {
            for k in 0..3 {
                let v = w.pair[j * 3 + k].to_f64();
                assert!(if j == k { v == 0.0 } else { (v - 16.0).abs() < 1e-12 });
            }
        }
        // E_{1;0} = Q₁ + Q₂ = 4 - 1.5t, order 5: 2⁵·4 + 5·2⁴·(-1.5)
        assert!((w.single[0].to_f64() - (128.0 - 120.0)).abs() < 1e-11);
    }

    #[test]
    fn folded_constant_sign() {
        // p = 1: folded leading = -QUADRANT_FACTOR / (4π (n-2)!) · L
        let c = ctx(1.0, &[1.0], 4);
        let expected = -QUADRANT_FACTOR / (4.0 * std::f64::consts::PI * 2.0) * 16.0;
        assert!((c.folded_weights().leading.to_f64() - expected).abs() < 1e-14);
    }

    #[test]
    fn vanishes_on_the_diagonal() {
        let c = ctx(1.0, &[1.0, 0.4], 6);
        assert!(c.evaluate(1.0, 1.0).unwrap().magnitude.is_zero());
    }

    #[test]
    fn branch_counting() {
        let c = ctx(1.0, &[1.0], 4);
        let v = c.evaluate(0.1, 0.2).unwrap();
        assert!(!v.magnitude.is_zero());
        assert_eq!(v.halfpole_crossings, 0);
        assert_eq!(c.evaluate(0.6, 0.2).unwrap().halfpole_crossings, 1);
        assert_eq!(c.evaluate(0.6, 0.7).unwrap().halfpole_crossings, 2);
        assert!(c.evaluate(0.0, 0.2).is_err());
        assert!(c.evaluate(0.5, 0.2).is_err());
    }

    #[test]
    fn pole_flag() {
        let c = ctx(1.0, &[1.0, 0.4], 6);
        let s = c.singular_points()[0];
        assert!(c.evaluate(s * (1.0 + 1e-12), 0.3).unwrap().pole_indicator);
        assert!(!c.evaluate(s * 1.1, 0.3).unwrap().pole_indicator);
    }

    #[test]
    fn singular_points_increase() {
        let c = ctx(3.0, &[1.44, 0.64, 0.49, 0.25, 0.16], 200);
        assert!(c.singular_points().windows(2).all(|w| w[0] < w[1]));
        assert!((c.singular_points()[0] - 3.0 / 2.88).abs() < 1e-15);
    }

    #[test]
    fn scaling_keeps_singular_points() {
        let a = ctx(2.0, &[1.0, 0.3], 5);
        let b = ctx(4.0, &[2.0, 0.6], 5);
        for (u, v) in a.singular_points().iter().zip(b.singular_points()) {
            assert!((u - v).abs() < 1e-15);
        }
        // Branch structure is identical at every point.
        for &(r1, r2) in &[(0.5, 2.0), (1.2, 4.0), (3.5, 0.2)] {
            assert_eq!(
                a.evaluate(r1, r2).unwrap().halfpole_crossings,
                b.evaluate(r1, r2).unwrap().halfpole_crossings
            );
        }
    }

    #[test]
    fn complex_form_approaches_branch_rule() {
        let c = ctx(1.3, &[1.0, 0.5, 0.2], 7);
        for &(r1, r2) in &[(0.3, 0.5), (0.9, 0.4), (1.6, 2.9), (4.0, 0.2), (2.0, 3.6)] {
            let b = c.evaluate(r1, r2).unwrap();
            let z = c.evaluate_complex(r1, r2, 1e-10).unwrap();
            let phase = match b.halfpole_crossings % 4 {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, -1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, 1.0),
            };
            let expected = phase * b.magnitude.to_f64_scaled(z.log_scale);
            assert!(
                (z.mantissa - expected).norm() <= 1e-7 * expected.norm(),
                "{r1},{r2}: {} vs {}",
                z.mantissa,
                expected
            );
        }
    }

    proptest! {
        #[test]
        fn symmetric_in_r1_r2(r1 in 0.01f64..6.0, r2 in 0.01f64..6.0) {
            let c = ctx(1.7, &[1.2, 0.7, 0.3], 8);
            let a = c.evaluate(r1, r2);
            let b = c.evaluate(r2, r1);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a.halfpole_crossings, b.halfpole_crossings);
                prop_assert!(a.magnitude.rel_diff(b.magnitude) <= 1e-10);
            }
        }

        #[test]
        fn crossings_are_piecewise_constant(r in 0.01f64..10.0) {
            let c = ctx(2.0, &[1.2, 0.7, 0.3], 8);
            let below = c.singular_points().iter().filter(|&&s| s < r).count() as u32;
            let v = c.evaluate(r, 0.01).unwrap();
            prop_assert_eq!(v.halfpole_crossings, below);
        }
    }
}
