//! Epsilon backend.
//!
//! Evaluates the unregularised integrand at x + iε with principal-branch
//! square roots and no branch bookkeeping, integrates over the quadrant,
//! takes the imaginary part and extrapolates ε → 0. At finite ε the result
//! is a smooth function of ε, so the extrapolation uses integer powers.
//!
//! The kink |r₁ - r₂| is handled exactly: for fixed r₁,
//! ∫ |r₁ - r₂| b(r₂) dr₂ = r₁ (2C₀(r₁) - T₀) - (2C₁(r₁) - T₁), with C_q the
//! cumulative and T_q the total moments of b.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::de::{rule_within, Node};
use super::QuadratureConfig;
use crate::error::{Error, Result};
use crate::integrand::IntegrandContext;
use crate::sympoly::SignedLog;

/// The integrand is bounded at finite ε, so nodes beyond |t| = 3.2 carry
/// negligible weight.
const T_MAX_BOUNDED: f64 = 3.2;
const FIRST_LEVEL: u32 = 3;
const LAST_LEVEL: u32 = 8;
const PRUNE_LOG_GAP: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    /// Extrapolated Im at ε → 0, constants included.
    pub value: f64,
    /// Difference of the last two extrapolants.
    pub error: f64,
    /// (ε, value at ε) in schedule order, as far as evaluated.
    pub samples: Vec<(f64, f64)>,
    pub extrapolants: Vec<f64>,
}

/// Principal square root of a + ib for b ≥ 0, without trigonometry.
fn sqrt_upper(a: f64, b: f64) -> Complex64 {
    let m = a.hypot(b);
    if a >= 0.0 {
        let re = (0.5 * (m + a)).sqrt();
        Complex64::new(re, if re > 0.0 { 0.5 * b / re } else { 0.0 })
    } else {
        let im = (0.5 * (m - a)).sqrt();
        Complex64::new(0.5 * b / im, im)
    }
}

struct Setup<'a> {
    x: f64,
    eps: f64,
    lambdas: &'a [f64],
    alpha: f64,
    /// ln of the peak of r^α e^{-r}; every G value is divided by e^{k_ref}.
    k_ref: f64,
    /// 1 (only 1/r) or 1 + p (1/r and the pole factors).
    kinds: usize,
    w1: f64,
    w2: Vec<f64>,
    w3: Vec<f64>,
    w_scale: f64,
}

impl<'a> Setup<'a> {
    fn new(ctx: &'a IntegrandContext, eps: f64) -> Self {
        let p = ctx.p();
        let alpha = ctx.radial_power();
        let w = ctx.folded_weights();
        let w_scale = w.log_scale();
        let f = |s: SignedLog| s.to_f64_scaled(w_scale);
        Setup {
            x: ctx.x(),
            eps,
            lambdas: ctx.lambdas(),
            alpha,
            k_ref: alpha * alpha.ln() - alpha,
            kinds: if p >= 2 { 1 + p } else { 1 },
            w1: f(w.leading),
            w2: w.single.iter().map(|&v| f(v)).collect(),
            w3: w.pair.iter().map(|&v| f(v)).collect(),
            w_scale,
        }
    }

    /// u(r) G(r) e^{-k_ref} for every kind u, written into `out`.
    fn kinds_at(&self, r: f64, out: &mut [Complex64]) {
        let mut roots = Complex64::new(1.0, 0.0);
        for (l, lam) in self.lambdas.iter().enumerate() {
            let z = Complex64::new(self.x - 2.0 * lam * r, self.eps);
            roots *= sqrt_upper(z.re, z.im);
            if self.kinds > 1 {
                out[1 + l] = z;
            }
        }
        let g = (self.alpha * r.ln() - r - self.k_ref).exp() / roots;
        out[0] = g / r;
        for v in out.iter_mut().skip(1) {
            *v = g / *v;
        }
    }

    /// ln |G e^{-k_ref}| at r, ignoring the kind factor.
    fn log_g(&self, r: f64) -> f64 {
        let mut v = self.alpha * r.ln() - r - self.k_ref;
        for lam in self.lambdas {
            v -= 0.25 * ((self.x - 2.0 * lam * r).powi(2) + self.eps * self.eps).ln();
        }
        v
    }

    /// Upper bound of ln ∫ |u G| e^{-k_ref} over [a, b] (both moments,
    /// every kind), for a > 0.
    fn log_bound(&self, a: f64, b: f64) -> f64 {
        let r = self.alpha.clamp(a, b);
        let mut v = self.alpha * r.ln() - r - self.k_ref + (b - a).ln() + b.ln().max(0.0);
        let mut worst_factor = -a.ln();
        for lam in self.lambdas {
            let s = self.x / (2.0 * lam);
            let gap = if s < a {
                a - s
            } else if s > b {
                s - b
            } else {
                0.0
            };
            let d = (2.0 * lam * gap).max(self.eps).ln();
            v -= 0.5 * d;
            worst_factor = worst_factor.max(-d);
        }
        v + worst_factor
    }

    /// Pieces covering [0, T], split at the singular points, with
    /// negligible ones dropped.
    fn pieces(&self, ctx: &IntegrandContext, config: &QuadratureConfig) -> Vec<(f64, f64)> {
        let n = ctx.params().n as f64;
        let s = ctx.singular_points();
        let s_last = *s.last().expect("non-empty spectrum");
        let mut t = config
            .tail_cut
            .unwrap_or((4.0 * n).max(s_last + 40.0))
            .max(s_last + 1.0);
        while self.alpha * t.ln() - t - self.k_ref > -PRUNE_LOG_GAP {
            t *= 1.5;
        }
        let width = 4.0 * (self.alpha + 1.0).sqrt();
        let mut cuts = vec![0.0];
        cuts.extend_from_slice(s);
        cuts.push(t);
        let mut pieces = Vec::new();
        for w in cuts.windows(2) {
            let count = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
            let step = (w[1] - w[0]) / count as f64;
            for k in 0..count {
                let lo = w[0] + k as f64 * step;
                let hi = if k + 1 == count { w[1] } else { lo + step };
                pieces.push((lo, hi));
            }
        }
        let reference = pieces
            .iter()
            .map(|&(a, b)| self.log_g(0.5 * (a + b)) + (b - a).ln())
            .fold(f64::NEG_INFINITY, f64::max);
        pieces
            .into_iter()
            .filter(|&(a, b)| a == 0.0 || self.log_bound(a, b) >= reference - PRUNE_LOG_GAP)
            .collect()
    }

    /// Weighted sums of [u G, r u G] over `nodes` for every kind.
    fn moments(&self, nodes: &[Node], acc: &mut [Complex64], scratch: &mut [Complex64]) {
        for nd in nodes {
            self.kinds_at(nd.x, scratch);
            for (v, &a) in scratch.iter().enumerate() {
                acc[2 * v] += nd.weight * a;
                acc[2 * v + 1] += nd.weight * nd.x * a;
            }
        }
    }

    /// The scaled quadrant integral at one refinement level.
    fn quadrant(&self, pieces: &[(f64, f64)], level: u32) -> Complex64 {
        let m = 2 * self.kinds;
        let zero = Complex64::new(0.0, 0.0);
        let rules: Vec<Vec<Node>> = pieces
            .iter()
            .map(|&(a, b)| rule_within(a, b, level, T_MAX_BOUNDED))
            .collect();
        let mut scratch = vec![zero; self.kinds];
        let mut prefix = vec![vec![zero; m]; pieces.len() + 1];
        for (k, nodes) in rules.iter().enumerate() {
            let mut acc = prefix[k].clone();
            self.moments(nodes, &mut acc, &mut scratch);
            prefix[k + 1] = acc;
        }
        let total = &prefix[pieces.len()];
        let p = self.kinds - 1;

        let outer: Vec<(usize, Node)> = rules
            .iter()
            .enumerate()
            .flat_map(|(k, nodes)| nodes.iter().map(move |nd| (k, *nd)))
            .collect();
        let values: Vec<Complex64> = outer
            .par_iter()
            .map(|&(k, nd)| {
                let r1 = nd.x;
                let mut cum = prefix[k].clone();
                let mut scratch = vec![zero; self.kinds];
                self.moments(
                    &rule_within(pieces[k].0, r1, level, T_MAX_BOUNDED),
                    &mut cum,
                    &mut scratch,
                );
                // ∫ |r₁ - r₂| b_v(r₂) dr₂ for every kind v
                let kink: Vec<Complex64> = (0..self.kinds)
                    .map(|v| r1 * (2.0 * cum[2 * v] - total[2 * v]) - (2.0 * cum[2 * v + 1] - total[2 * v + 1]))
                    .collect();
                self.kinds_at(r1, &mut scratch);
                let mut val = scratch[0] * self.w1 * kink[0];
                for j in 0..p {
                    val += scratch[0] * self.w2[j] * kink[1 + j];
                    let mut inner = self.w2[j] * kink[0];
                    for kk in 0..p {
                        if kk != j {
                            inner += self.w3[j * p + kk] * kink[1 + kk];
                        }
                    }
                    val += scratch[1 + j] * inner;
                }
                nd.weight * val
            })
            .collect();
        values.into_iter().sum()
    }

    /// Im of the quadrant integral with constants, refined until two levels
    /// agree to `tol`. Returns the value and the level used.
    fn value(&self, pieces: &[(f64, f64)], start: u32, tol: f64) -> Result<(f64, u32)> {
        let mut prev = self.quadrant(pieces, start);
        for level in start + 1..=LAST_LEVEL {
            let cur = self.quadrant(pieces, level);
            if (cur - prev).norm() <= tol * cur.norm() {
                let scale = SignedLog::exp(2.0 * self.k_ref + self.w_scale);
                return Ok(((SignedLog::from_f64(cur.im) * scale).to_f64(), level));
            }
            prev = cur;
        }
        Err(Error::NoConvergence(format!(
            "epsilon quadrature at x = {}, eps = {} did not settle by level {LAST_LEVEL}",
            self.x, self.eps
        )))
    }
}

/// Value at ε = 0 of the quadratic through three (ε, v) points.
fn extrapolate(pts: &[(f64, f64)]) -> f64 {
    let mut out = 0.0;
    for (i, &(ei, vi)) in pts.iter().enumerate() {
        let mut l = 1.0;
        for (j, &(ej, _)) in pts.iter().enumerate() {
            if i != j {
                l *= ej / (ej - ei);
            }
        }
        out += vi * l;
    }
    out
}

/// Im of the quadrant integral by ε-extrapolation.
pub fn imaginary_part_epsilon(ctx: &IntegrandContext, config: &QuadratureConfig) -> Result<EpsilonReport> {
    config.check()?;
    let tol = config.epsilon_tol;
    let quad_tol = (1e-2 * tol).min(config.rel_tol);
    let mut samples = Vec::new();
    let mut extrapolants: Vec<f64> = Vec::new();
    let mut level = FIRST_LEVEL;
    let accept = |a: f64, b: f64, factor: f64| (a - b).abs() <= factor * (tol * b.abs()).max(1e-12);
    for &e in &config.epsilon_schedule {
        let eps = e * ctx.x();
        let setup = Setup::new(ctx, eps);
        let pieces = setup.pieces(ctx, config);
        let (v, used) = setup.value(&pieces, level.max(FIRST_LEVEL), quad_tol)?;
        level = used - 1;
        samples.push((eps, v));
        if samples.len() >= 3 {
            extrapolants.push(extrapolate(&samples[samples.len() - 3..]));
        }
        if let [.., a, b] = extrapolants[..] {
            if accept(a, b, 1.0) {
                return Ok(EpsilonReport {
                    value: b,
                    error: (a - b).abs(),
                    samples,
                    extrapolants,
                });
            }
        }
    }
    match extrapolants[..] {
        [.., a, b] if accept(a, b, 10.0) => Ok(EpsilonReport {
            value: b,
            error: (a - b).abs(),
            samples,
            extrapolants,
        }),
        [.., a, b] => Err(Error::ExtrapolationUnstable { a, b }),
        _ => Err(Error::Config("epsilon schedule too short to extrapolate".into())),
    }
}
