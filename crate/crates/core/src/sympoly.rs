//! Finite-sum machinery for the density: polynomials in the bookkeeping
//! variable t (the Q_l = x - 2 Λ_l t are linear in t), elementary symmetric
//! polynomials with excluded indices, and the derivative functional
//! dᵐ/dtᵐ [e^{2t} P(t)] at t = 0 that replaces the δ-derivatives.
//!
//! Factorials and powers of two reach far outside the f64 range at n = 200,
//! so every weight is carried as a [`SignedLog`].

use std::cmp::Ordering;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::spectral::Spectrum;

/// A real number stored as sign and natural log of its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    sign: i8,
    logmag: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        logmag: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLog = SignedLog { sign: 1, logmag: 0.0 };

    /// Builds from a sign and log-magnitude. A zero sign gives zero.
    pub fn from_parts(sign: i8, logmag: f64) -> Self {
        if sign == 0 || logmag == f64::NEG_INFINITY {
            SignedLog::ZERO
        } else {
            SignedLog {
                sign: sign.signum(),
                logmag,
            }
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            SignedLog::ZERO
        } else {
            SignedLog {
                sign: if v > 0.0 { 1 } else { -1 },
                logmag: v.abs().ln(),
            }
        }
    }

    /// e^{l}
    pub fn exp(l: f64) -> Self {
        SignedLog::from_parts(1, l)
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    pub fn logmag(self) -> f64 {
        self.logmag
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    pub fn abs(self) -> Self {
        SignedLog::from_parts(self.sign.abs(), self.logmag)
    }

    pub fn to_f64(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * self.logmag.exp(),
        }
    }

    /// Value divided by e^{shift}, as a plain float.
    pub fn to_f64_scaled(self, shift: f64) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * (self.logmag - shift).exp(),
        }
    }

    pub fn powi(self, k: i32) -> Self {
        if self.sign == 0 {
            return if k == 0 { SignedLog::ONE } else { SignedLog::ZERO };
        }
        let sign = if self.sign < 0 && k % 2 != 0 { -1 } else { 1 };
        SignedLog::from_parts(sign, self.logmag * f64::from(k))
    }

    /// Relative difference |a - b| / max(|a|, |b|); zero when both are zero.
    pub fn rel_diff(self, other: Self) -> f64 {
        let diff = (self - other).abs();
        let scale = if self.abs().cmp_mag(other.abs()) == Ordering::Less {
            other.abs()
        } else {
            self.abs()
        };
        if scale.is_zero() {
            0.0
        } else {
            (diff.logmag - scale.logmag).exp()
        }
    }

    fn cmp_mag(self, other: Self) -> Ordering {
        self.logmag.total_cmp(&other.logmag)
    }
}

impl Default for SignedLog {
    fn default() -> Self {
        SignedLog::ZERO
    }
}

impl From<f64> for SignedLog {
    fn from(v: f64) -> Self {
        SignedLog::from_f64(v)
    }
}

impl Neg for SignedLog {
    type Output = SignedLog;
    fn neg(self) -> SignedLog {
        SignedLog {
            sign: -self.sign,
            logmag: self.logmag,
        }
    }
}

impl Mul for SignedLog {
    type Output = SignedLog;
    fn mul(self, rhs: SignedLog) -> SignedLog {
        SignedLog::from_parts(self.sign * rhs.sign, self.logmag + rhs.logmag)
    }
}

impl Div for SignedLog {
    type Output = SignedLog;
    fn div(self, rhs: SignedLog) -> SignedLog {
        assert!(!rhs.is_zero(), "SignedLog division by zero");
        SignedLog::from_parts(self.sign * rhs.sign, self.logmag - rhs.logmag)
    }
}

impl Add for SignedLog {
    type Output = SignedLog;
    fn add(self, rhs: SignedLog) -> SignedLog {
        if self.sign == 0 {
            return rhs;
        }
        if rhs.sign == 0 {
            return self;
        }
        let (big, small) = if self.logmag >= rhs.logmag {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let ratio = (small.logmag - big.logmag).exp();
        if big.sign == small.sign {
            SignedLog::from_parts(big.sign, big.logmag + ratio.ln_1p())
        } else if ratio >= 1.0 {
            SignedLog::ZERO
        } else {
            SignedLog::from_parts(big.sign, big.logmag + (-ratio).ln_1p())
        }
    }
}

impl Sub for SignedLog {
    type Output = SignedLog;
    fn sub(self, rhs: SignedLog) -> SignedLog {
        self + (-rhs)
    }
}

impl Sum for SignedLog {
    fn sum<I: Iterator<Item = SignedLog>>(iter: I) -> SignedLog {
        // Accumulate relative to the running maximum so that long sums do not
        // lose precision through repeated log1p round trips.
        let terms: Vec<SignedLog> = iter.filter(|t| !t.is_zero()).collect();
        let Some(max) = terms.iter().map(|t| t.logmag).max_by(f64::total_cmp) else {
            return SignedLog::ZERO;
        };
        let acc: f64 = terms.iter().map(|t| t.to_f64_scaled(max)).sum();
        SignedLog::from_f64(acc) * SignedLog::exp(max)
    }
}

/// ln k!
pub fn ln_factorial(k: u64) -> f64 {
    if k <= 20 {
        // k! is exact (or within one ulp) in f64 here; ln Γ is not as sharp
        (2..=k).map(|i| i as f64).product::<f64>().ln()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// Polynomial in t, `coeffs[k]` multiplying t^k. The zero polynomial is `[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Poly { coeffs: vec![1.0] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn scale(&self, alpha: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * alpha).collect())
    }

    /// Multiplies in place by (a + b t).
    fn mul_linear(&mut self, a: f64, b: f64) {
        let mut out = vec![0.0; self.coeffs.len() + 1];
        for (k, &c) in self.coeffs.iter().enumerate() {
            out[k] += a * c;
            out[k + 1] += b * c;
        }
        *self = Poly::new(out);
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new(
            (0..len)
                .map(|k| self.coeffs.get(k).unwrap_or(&0.0) + rhs.coeffs.get(k).unwrap_or(&0.0))
                .collect(),
        )
    }
}

/// ∏_j (a_j + b_j t); the empty product is 1.
pub fn product_of_linear(factors: &[(f64, f64)]) -> Poly {
    let mut p = Poly::one();
    for &(a, b) in factors {
        p.mul_linear(a, b);
    }
    p
}

/// ∏_{l ∉ excluded} (x - 2 Λ_l t), indices into the descending spectrum.
pub fn q_product(x: f64, spectrum: &Spectrum, excluded: &[usize]) -> Result<Poly> {
    let p = spectrum.len();
    if let Some(&index) = excluded.iter().find(|&&i| i >= p) {
        return Err(Error::IndexOutOfRange { index, len: p });
    }
    let factors: Vec<(f64, f64)> = spectrum
        .values()
        .iter()
        .enumerate()
        .filter(|(l, _)| !excluded.contains(l))
        .map(|(_, &lambda)| (x, -2.0 * lambda))
        .collect();
    Ok(product_of_linear(&factors))
}

/// d/dJ ∏_{l ∉ excluded} (J + Q_l) at J = 0, i.e. the elementary symmetric
/// polynomial of order (remaining - 1) in the remaining Q_l, as a polynomial
/// in t. Each summand re-multiplies its own factors; nothing is divided out.
pub fn q_esym_derivative(x: f64, spectrum: &Spectrum, excluded: &[usize]) -> Result<Poly> {
    let p = spectrum.len();
    let mut total = Poly::zero();
    let mut skip = excluded.to_vec();
    for l in (0..p).filter(|l| !excluded.contains(l)) {
        skip.push(l);
        total = &total + &q_product(x, spectrum, &skip)?;
        skip.pop();
    }
    Ok(total)
}

/// Elementary symmetric polynomial E_m of `values`.
pub fn esym(values: &[f64], m: usize) -> Result<f64> {
    if m > values.len() {
        return Err(Error::OrderOutOfRange {
            order: m as i64,
            max: values.len(),
        });
    }
    // e[k] holds E_k of the prefix processed so far.
    let mut e = vec![0.0; m + 1];
    e[0] = 1.0;
    for (i, &v) in values.iter().enumerate() {
        for k in (1..=m.min(i + 1)).rev() {
            e[k] += v * e[k - 1];
        }
    }
    Ok(e[m])
}

/// dᵐ/dtᵐ [e^{2t} P(t)] at t = 0, i.e. Σ_k C(m,k) 2^{m-k} k! P_k.
pub fn leibniz_at_zero(poly: &Poly, m: usize) -> SignedLog {
    let ln2 = std::f64::consts::LN_2;
    let ln_m_fact = ln_factorial(m as u64);
    poly.coeffs()
        .iter()
        .enumerate()
        .take(m + 1)
        .map(|(k, &c)| {
            // C(m,k) k! = m! / (m-k)!
            let weight = ln_m_fact - ln_factorial((m - k) as u64) + (m - k) as f64 * ln2;
            SignedLog::from_f64(c) * SignedLog::exp(weight)
        })
        .sum()
}
