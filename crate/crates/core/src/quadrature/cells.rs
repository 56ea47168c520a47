//! Cell backend.
//!
//! Inside a cell (interval i for r₁, interval i' for r₂) every square-root
//! factor keeps a fixed branch, so the integrand is a real function times
//! the phase (-i)^{i+i'}. Only cells with i + i' odd have an imaginary part.
//! There i ≠ i', the sign of r₁ - r₂ is constant and each term factorises
//! into products of one-dimensional moments
//!
//! ```text
//! M_q(i, u) = ∫_{interval i} r^q u(r) G(r) dr,   u ∈ {1/r, 1/(x - 2Λ_j r)}
//! ```
//!
//! A pole factor 1/(x⁺ - 2Λ_j r) meeting its own square root gives a local
//! |s_j - r|^{-3/2}. The x⁺ → x + i0 limit of such an integral is its
//! Hadamard finite part, evaluated by one integration by parts.

use serde::{Deserialize, Serialize};

use super::de::{integrate_vec, Node};
use super::{build_partition, Cell, QuadratureConfig};
use crate::error::{Error, Result};
use crate::integrand::IntegrandContext;
use crate::sympoly::SignedLog;

/// Pieces whose bound lies this far (in log) below the largest piece of the
/// same moment are skipped.
const PRUNE_LOG_GAP: f64 = 80.0;
/// Doublings of the truncation point before giving up on the tail.
const MAX_TAIL_DOUBLINGS: u32 = 40;

/// The r-dependent prefactor of a moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Factor {
    /// 1/r
    InvR,
    /// 1/(x - 2Λ_j r), 0-based j
    Pole(usize),
}

/// Zeroth and first moments over a range inside one interval. The sign of
/// a pole factor is included, the branch phase is not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub m0: SignedLog,
    pub m1: SignedLog,
    pub converged: bool,
    /// Number of finite-part endpoints evaluated.
    pub finite_parts: usize,
}

impl Moments {
    const ZERO: Moments = Moments {
        m0: SignedLog::ZERO,
        m1: SignedLog::ZERO,
        converged: true,
        finite_parts: 0,
    };

    fn add(self, other: Moments) -> Moments {
        Moments {
            m0: self.m0 + other.m0,
            m1: self.m1 + other.m1,
            converged: self.converged && other.converged,
            finite_parts: self.finite_parts + other.finite_parts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// The pole sits at the left end of the piece.
    Left,
    Right,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    lo_sing: Option<usize>,
    hi_sing: Option<usize>,
    finite_part: Option<Side>,
}

struct MomentIntegrator<'a> {
    lambdas: &'a [f64],
    s: &'a [f64],
    /// Power of r for q = 0, including the 1/r factor.
    alpha: f64,
    factor: Factor,
    /// Sign of the pole factor on this range.
    sign: i8,
    rel_tol: f64,
    max_levels: u32,
}

impl MomentIntegrator<'_> {
    /// s_l - r, exact at singular piece endpoints.
    fn dist(&self, l: usize, piece: &Piece, nd: &Node) -> f64 {
        if piece.lo_sing == Some(l) {
            -nd.from_lo
        } else if piece.hi_sing == Some(l) {
            nd.from_hi
        } else {
            self.s[l] - nd.x
        }
    }

    fn pole(&self) -> Option<usize> {
        match self.factor {
            Factor::Pole(j) => Some(j),
            Factor::InvR => None,
        }
    }

    /// ln of the q = 0 integrand at a node.
    fn log_f(&self, piece: &Piece, nd: &Node) -> f64 {
        let r = nd.x;
        let mut v = self.alpha * r.ln() - r;
        for (l, lam) in self.lambdas.iter().enumerate() {
            let d = (2.0 * lam * self.dist(l, piece, nd)).abs().ln();
            v -= if Some(l) == self.pole() { 1.5 * d } else { 0.5 * d };
        }
        v
    }

    /// ln g with g = f |s_j - r|^{3/2} for the pole j, and d(ln g)/dr.
    fn log_g(&self, j: usize, r: f64) -> (f64, f64) {
        let mut v = self.alpha * r.ln() - r - 1.5 * (2.0 * self.lambdas[j]).ln();
        let mut dv = self.alpha / r - 1.0;
        for (l, lam) in self.lambdas.iter().enumerate() {
            if l != j {
                let d = self.s[l] - r;
                v -= 0.5 * (2.0 * lam * d).abs().ln();
                dv += 0.5 / d;
            }
        }
        (v, dv)
    }

    fn at(&self, r: f64) -> Node {
        Node {
            x: r,
            from_lo: f64::NAN,
            from_hi: f64::NAN,
            weight: 0.0,
        }
    }

    /// Upper bound on ln of the integrand mass of a regular piece without
    /// singular endpoints (covers both q = 0 and q = 1).
    fn log_bound(&self, piece: &Piece) -> f64 {
        let (a, b) = (piece.lo, piece.hi);
        let mut v = if self.alpha <= 0.0 {
            // r^α e^{-r} is decreasing
            self.alpha * a.max(f64::MIN_POSITIVE).ln() - a
        } else {
            let r = self.alpha.clamp(a, b);
            self.alpha * r.ln() - r
        };
        v += b.ln().max(0.0) + (b - a).ln();
        for (l, lam) in self.lambdas.iter().enumerate() {
            let s = self.s[l];
            let gap = if s < a { a - s } else { s - b };
            let d = (2.0 * lam * gap).ln();
            v -= if Some(l) == self.pole() { 1.5 * d } else { 0.5 * d };
        }
        v
    }

    fn reference(&self, piece: &Piece) -> f64 {
        let mid = 0.5 * (piece.lo + piece.hi);
        match piece.finite_part {
            Some(_) => self.log_g(self.pole().expect("finite part needs a pole"), mid).0,
            None => self.log_f(
                &Piece {
                    lo_sing: None,
                    hi_sing: None,
                    ..*piece
                },
                &self.at(mid),
            ),
        }
    }

    fn integrate_piece(&self, piece: &Piece) -> Moments {
        let reference = self.reference(piece);
        let scale = SignedLog::exp(reference) * SignedLog::from_parts(self.sign, 0.0);
        let Some(side) = piece.finite_part else {
            let (v, converged) = integrate_vec(
                piece.lo,
                piece.hi,
                |nd| {
                    let e = (self.log_f(piece, nd) - reference).exp();
                    [e, e * nd.x]
                },
                self.rel_tol,
                self.max_levels,
            );
            return Moments {
                m0: SignedLog::from_f64(v[0]) * scale,
                m1: SignedLog::from_f64(v[1]) * scale,
                converged,
                finite_parts: 0,
            };
        };
        let j = self.pole().expect("finite part needs a pole");
        // FP ∫ g |a - r|^{-3/2} with a = s_j at one end and M at the other:
        //   pole on the right: -2 g(M)(a-M)^{-1/2} - 2 ∫ g' (a-r)^{-1/2}
        //   pole on the left:  -2 g(M)(M-a)^{-1/2} + 2 ∫ g' (r-a)^{-1/2}
        let (m, gap) = match side {
            Side::Right => (piece.lo, piece.hi - piece.lo),
            Side::Left => (piece.hi, piece.hi - piece.lo),
        };
        let (lg_m, _) = self.log_g(j, m);
        let boundary = (lg_m - reference).exp() / gap.sqrt();
        let (v, converged) = integrate_vec(
            piece.lo,
            piece.hi,
            |nd| {
                let t = match side {
                    Side::Right => nd.from_hi,
                    Side::Left => nd.from_lo,
                };
                let (lg, dlg) = self.log_g(j, nd.x);
                let e = (lg - reference).exp() / t.sqrt();
                [e * dlg, e * (nd.x * dlg + 1.0)]
            },
            self.rel_tol,
            self.max_levels,
        );
        let k = match side {
            Side::Right => -2.0,
            Side::Left => 2.0,
        };
        Moments {
            m0: SignedLog::from_f64(-2.0 * boundary + k * v[0]) * scale,
            m1: SignedLog::from_f64(-2.0 * boundary * m + k * v[1]) * scale,
            converged,
            finite_parts: 1,
        }
    }

    /// Equal pieces of width at most `width` covering [lo, hi].
    fn pieces(&self, lo: f64, hi: f64, width: f64) -> Vec<Piece> {
        let sing = |v: f64| self.s.iter().position(|&s| s == v);
        let (lo_sing, hi_sing) = (sing(lo), sing(hi));
        let pole = self.pole();
        let fp_lo = pole.is_some() && lo_sing == pole;
        let fp_hi = pole.is_some() && hi_sing == pole;
        let mut count = ((hi - lo) / width).ceil().max(1.0) as usize;
        if (fp_lo || fp_hi) && count < 2 {
            count = 2;
        }
        let step = (hi - lo) / count as f64;
        (0..count)
            .map(|k| {
                let a = if k == 0 { lo } else { lo + k as f64 * step };
                let b = if k + 1 == count { hi } else { lo + (k + 1) as f64 * step };
                let first = k == 0;
                let last = k + 1 == count;
                Piece {
                    lo: a,
                    hi: b,
                    lo_sing: if first { lo_sing } else { None },
                    hi_sing: if last { hi_sing } else { None },
                    finite_part: if first && fp_lo {
                        Some(Side::Left)
                    } else if last && fp_hi {
                        Some(Side::Right)
                    } else {
                        None
                    },
                }
            })
            .collect()
    }

    /// Largest reference log-mass over the pieces.
    fn log_scale(&self, pieces: &[Piece]) -> f64 {
        pieces
            .iter()
            .map(|p| self.reference(p) + (p.hi - p.lo).ln())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn integrate_pieces(&self, pieces: &[Piece], log_scale: f64) -> Moments {
        let mut total = Moments::ZERO;
        for piece in pieces {
            let regular = piece.finite_part.is_none() && piece.lo_sing.is_none() && piece.hi_sing.is_none();
            if regular && self.log_bound(piece) < log_scale - PRUNE_LOG_GAP {
                continue;
            }
            total = total.add(self.integrate_piece(piece));
        }
        total
    }
}

fn tail_start(ctx: &IntegrandContext, config: &QuadratureConfig) -> f64 {
    let n = ctx.params().n as f64;
    let s_last = *ctx.singular_points().last().expect("non-empty spectrum");
    config.tail_cut.unwrap_or((4.0 * n).max(s_last + 40.0))
}

/// Moments of `factor · G` over [lo, hi], a sub-range of one partition
/// interval. `hi` may be infinite; the tail is truncated and extended by
/// doubling until its contribution drops below the tolerance.
pub fn interval_moments(
    ctx: &IntegrandContext,
    lo: f64,
    hi: f64,
    factor: Factor,
    config: &QuadratureConfig,
) -> Result<Moments> {
    let s = ctx.singular_points();
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Domain(format!("invalid range [{lo}, {hi}]")));
    }
    if s.iter().any(|&v| v > lo && v < hi) {
        return Err(Error::Domain(format!("range [{lo}, {hi}] straddles a singular point")));
    }
    let sign = match factor {
        Factor::Pole(j) if j >= s.len() => {
            return Err(Error::IndexOutOfRange { index: j, len: s.len() });
        }
        Factor::Pole(j) if lo >= s[j] => -1,
        _ => 1,
    };
    let alpha = ctx.radial_power() - if factor == Factor::InvR { 1.0 } else { 0.0 };
    let integrator = MomentIntegrator {
        lambdas: ctx.lambdas(),
        s,
        alpha,
        factor,
        sign,
        rel_tol: config.rel_tol,
        max_levels: config.max_levels,
    };
    // Width of the bulk of r^α e^{-r} is about 2 sqrt(α + 1).
    let width = 4.0 * (alpha.max(0.0) + 1.0).sqrt();
    if hi.is_finite() {
        let pieces = integrator.pieces(lo, hi, width);
        let scale = integrator.log_scale(&pieces);
        return Ok(integrator.integrate_pieces(&pieces, scale));
    }
    let mut cut = tail_start(ctx, config).max(lo + width);
    let pieces = integrator.pieces(lo, cut, width);
    let scale = integrator.log_scale(&pieces);
    let mut total = integrator.integrate_pieces(&pieces, scale);
    for _ in 0..MAX_TAIL_DOUBLINGS {
        let tail = integrator.integrate_pieces(&integrator.pieces(cut, 2.0 * cut, width), scale);
        total = total.add(tail);
        let small = |t: SignedLog, v: SignedLog| t.is_zero() || t.logmag() <= v.logmag() + config.rel_tol.ln();
        if small(tail.m0, total.m0) && small(tail.m1, total.m1) {
            return Ok(total);
        }
        cut *= 2.0;
    }
    Ok(Moments {
        converged: false,
        ..total
    })
}

/// Imaginary part of one cell's contribution, constants included. Cells of
/// even parity have a real phase and give exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellValue {
    pub cell: Cell,
    pub im: SignedLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub value: f64,
    pub converged: bool,
    /// Finite-part endpoints evaluated (pole meeting its own square root).
    pub finite_parts: usize,
    /// Per contributing cell: (i, j, value), in index order.
    pub cells: Vec<(usize, usize, f64)>,
}

/// Moment table over the intervals of the partition.
struct MomentTable {
    factors: Vec<Factor>,
    /// [interval][factor]
    moments: Vec<Vec<Option<Moments>>>,
}

impl MomentTable {
    fn factor_index(&self, f: Factor) -> usize {
        match f {
            Factor::InvR => 0,
            Factor::Pole(j) => j + 1,
        }
    }

    fn new(ctx: &IntegrandContext, config: &QuadratureConfig, intervals: &[usize]) -> Result<Self> {
        let part = build_partition(ctx);
        let p = ctx.p();
        let mut factors = vec![Factor::InvR];
        // Pole terms only exist for p ≥ 2.
        if p >= 2 {
            factors.extend((0..p).map(Factor::Pole));
        }
        let mut moments = vec![vec![None; p + 1]; part.num_intervals()];
        for &i in intervals {
            let (lo, hi) = part.interval(i);
            for &f in &factors {
                let idx = match f {
                    Factor::InvR => 0,
                    Factor::Pole(j) => j + 1,
                };
                moments[i][idx] = Some(interval_moments(ctx, lo, hi, f, config)?);
            }
        }
        Ok(MomentTable { factors, moments })
    }

    fn get(&self, i: usize, f: Factor) -> Moments {
        self.moments[i][self.factor_index(f)].expect("moment computed for requested interval")
    }

    /// Im of the (u on r₁, v on r₂) product over the cell, without weights.
    fn pair(&self, cell: &Cell, u: Factor, v: Factor) -> SignedLog {
        let (i, j) = (cell.i, cell.j);
        let im = match (i + j) % 4 {
            1 => -1,
            3 => 1,
            _ => return SignedLog::ZERO,
        };
        let sigma = if i > j { 1 } else { -1 };
        let (a, b) = (self.get(i, u), self.get(j, v));
        (a.m1 * b.m0 - a.m0 * b.m1) * SignedLog::from_parts(im * sigma, 0.0)
    }

    fn cell(&self, ctx: &IntegrandContext, cell: &Cell) -> SignedLog {
        if (cell.i + cell.j).is_multiple_of(2) {
            return SignedLog::ZERO;
        }
        let w = ctx.folded_weights();
        let p = ctx.p();
        let mut terms = vec![w.leading * self.pair(cell, Factor::InvR, Factor::InvR)];
        if self.factors.len() > 1 {
            for j in 0..p {
                let pj = Factor::Pole(j);
                terms.push(w.single[j] * (self.pair(cell, Factor::InvR, pj) + self.pair(cell, pj, Factor::InvR)));
                for k in 0..p {
                    if j != k && !w.pair[j * p + k].is_zero() {
                        terms.push(w.pair[j * p + k] * self.pair(cell, pj, Factor::Pole(k)));
                    }
                }
            }
        }
        terms.into_iter().sum()
    }

    fn health(&self) -> (bool, usize) {
        let all = self.moments.iter().flatten().flatten();
        let converged = all.clone().all(|m| m.converged);
        let fp = all.map(|m| m.finite_parts).sum();
        (converged, fp)
    }
}

/// Im contribution of a single cell.
pub fn integrate_cell(ctx: &IntegrandContext, cell: &Cell, config: &QuadratureConfig) -> Result<CellValue> {
    let intervals = if cell.i == cell.j {
        vec![cell.i]
    } else {
        vec![cell.i, cell.j]
    };
    let table = MomentTable::new(ctx, config, &intervals)?;
    Ok(CellValue {
        cell: *cell,
        im: table.cell(ctx, cell),
    })
}

/// Im of the full quadrant integral: the sum of all odd-parity cells in
/// index order.
pub fn imaginary_part_cells(ctx: &IntegrandContext, config: &QuadratureConfig) -> Result<CellReport> {
    config.check()?;
    let part = build_partition(ctx);
    let all: Vec<usize> = (0..part.num_intervals()).collect();
    let table = MomentTable::new(ctx, config, &all)?;
    let values: Vec<(Cell, SignedLog)> = part.contributing().map(|c| (*c, table.cell(ctx, c))).collect();
    let total: SignedLog = values.iter().map(|(_, v)| *v).sum();
    let (converged, finite_parts) = table.health();
    Ok(CellReport {
        value: total.to_f64(),
        converged,
        finite_parts,
        cells: values.iter().map(|(c, v)| (c.i, c.j, v.to_f64())).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::de;
    use super::*;
    use crate::montecarlo::chisq_oracle;
    use crate::spectral::{ModelParams, Spectrum};

    fn ctx(x: f64, lambdas: &[f64], n: usize) -> IntegrandContext {
        let s = Spectrum::new(lambdas).unwrap();
        IntegrandContext::new(x, &s, &ModelParams::real(lambdas.len(), n)).unwrap()
    }

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn gamma_calibration_with_truncation() {
        // ∫₀^∞ r^{1/2} e^{-r} dr = Γ(3/2), truncated where e^{-r} is below 1e-26.
        let mut total = 0.0;
        for k in 0..6 {
            let (v, ok) = de::integrate_vec(
                10.0 * k as f64,
                10.0 * (k + 1) as f64,
                |nd| [nd.x.sqrt() * (-nd.x).exp()],
                1e-12,
                12,
            );
            assert!(ok);
            total += v[0];
        }
        assert!((total - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn semi_infinite_moment_matches_direct_rule() {
        // Λ = 1, n = 4: on [s, ∞) the 1/r moment is ∫ r^{1/2} e^{-r} (2(r - s))^{-1/2}.
        let c = ctx(2e-3, &[1.0], 4);
        let s = c.singular_points()[0];
        let m = interval_moments(&c, s, f64::INFINITY, Factor::InvR, &cfg()).unwrap();
        let exact = de::integrate(
            0.0,
            200.0,
            |nd| {
                let r = s + nd.from_lo;
                r.powf(0.5) * (-r).exp() / (2.0 * nd.from_lo).sqrt()
            },
            1e-13,
            0.0,
            14,
        );
        assert!(m.converged);
        assert!(m.m0.rel_diff(SignedLog::from_f64(exact.value)) < 1e-8);
    }

    #[test]
    fn single_series_matches_chi_squared() {
        for &n in &[4usize, 6, 8] {
            for &lam in &[0.5, 1.0, 2.0] {
                for &x in &[0.3, 1.0, 2.5, 7.0, 20.0] {
                    let r = imaginary_part_cells(&ctx(x, &[lam], n), &cfg()).unwrap();
                    let want = chisq_oracle(x, n, lam).unwrap();
                    assert!(
                        (r.value - want).abs() < 1e-9,
                        "n={n} lam={lam} x={x}: {} vs {want}",
                        r.value
                    );
                }
            }
        }
    }

    #[test]
    fn cell_agrees_with_direct_tensor_rule() {
        // p = 1: only the 1/(r₁r₂) term, cell (0, 1) on [0, s] x [s, T].
        let c = ctx(1.5, &[1.0], 5);
        let s = c.singular_points()[0];
        let cell = Cell {
            i: 0,
            j: 1,
            contributing: true,
        };
        let got = integrate_cell(&c, &cell, &cfg()).unwrap().im.to_f64();
        let inner = de::rule(0.0, s, 7);
        let mut direct = 0.0;
        for a in &inner {
            for k in 0..8 {
                let (lo, hi) = (s + 10.0 * k as f64, s + 10.0 * (k + 1) as f64);
                for b in de::rule(lo, hi, 7) {
                    if a.x >= s || b.x <= s {
                        // nodes rounded onto the branch point carry no weight
                        continue;
                    }
                    let v = c.evaluate(a.x, b.x).unwrap();
                    assert_eq!(v.halfpole_crossings, 1);
                    direct += a.weight * b.weight * v.magnitude.to_f64();
                }
            }
        }
        // phase (-i)^1: Im = -magnitude
        assert!((got + direct).abs() < 1e-6 * direct.abs(), "{got} vs {}", -direct);
    }

    #[test]
    fn even_cells_do_not_change_the_imaginary_part() {
        let c = ctx(1.3, &[1.0, 0.5, 0.2], 7);
        let part = build_partition(&c);
        let odd: f64 = imaginary_part_cells(&c, &cfg()).unwrap().value;
        let all: SignedLog = part
            .cells
            .iter()
            .map(|cell| integrate_cell(&c, cell, &cfg()).unwrap().im)
            .sum();
        assert!((all.to_f64() - odd).abs() <= 1e-7 * odd.abs());
    }

    #[test]
    fn moments_are_additive() {
        let c = ctx(3.0, &[1.0, 0.4], 6);
        let s = c.singular_points().to_vec();
        for f in [Factor::InvR, Factor::Pole(0), Factor::Pole(1)] {
            for (lo, hi) in [(0.0, s[0]), (s[0], s[1]), (s[1], s[1] + 30.0)] {
                let m = 0.37 * lo + 0.63 * hi;
                let whole = interval_moments(&c, lo, hi, f, &cfg()).unwrap();
                let left = interval_moments(&c, lo, m, f, &cfg()).unwrap();
                let right = interval_moments(&c, m, hi, f, &cfg()).unwrap();
                let split0 = left.m0 + right.m0;
                let split1 = left.m1 + right.m1;
                assert!(whole.m0.rel_diff(split0) < 2e-7, "{f:?} [{lo},{hi}] m0");
                assert!(whole.m1.rel_diff(split1) < 2e-7, "{f:?} [{lo},{hi}] m1");
            }
        }
    }

    #[test]
    fn finite_part_matches_epsilon_limit() {
        // Λ = {1, 0.3}, x = 1, n = 5: across s₀ = 0.5 the pole moment is
        // ∫ r² e^{-r} (1 - 0.6r)^{-1/2} (1 + iε - 2r)^{-3/2} dr in the ε → 0 limit.
        // Left of s₀ the phase is 1, right of it the square root carries -i.
        let c = ctx(1.0, &[1.0, 0.3], 5);
        let s0 = c.singular_points()[0];
        let b = 1.0;
        let left = interval_moments(&c, 0.0, s0, Factor::Pole(0), &cfg()).unwrap();
        let right = interval_moments(&c, s0, b, Factor::Pole(0), &cfg()).unwrap();
        assert_eq!(left.finite_parts + right.finite_parts, 2);
        let limit = num_complex::Complex64::new(left.m0.to_f64(), -right.m0.to_f64());

        let direct = |eps: f64| {
            use num_complex::Complex64;
            let h = |r: f64| r * r * (-r).exp() / (1.0 - 0.6 * r).sqrt();
            let part = |lo: f64, hi: f64, dist: &dyn Fn(&de::Node) -> f64, im: bool| {
                de::integrate(
                    lo,
                    hi,
                    |nd| {
                        let z = Complex64::new(2.0 * dist(nd), eps).powf(-1.5) * h(nd.x);
                        if im {
                            z.im
                        } else {
                            z.re
                        }
                    },
                    1e-13,
                    0.0,
                    16,
                )
                .value
            };
            let below = |nd: &de::Node| nd.from_hi;
            let above = |nd: &de::Node| -nd.from_lo;
            Complex64::new(
                part(0.0, s0, &below, false) + part(s0, b, &above, false),
                part(0.0, s0, &below, true) + part(s0, b, &above, true),
            )
        };
        // Corrections start at order ε^{1/2}.
        let h = 1e-9;
        let extrapolated = 2.0 * direct(h) - direct(4.0 * h);
        assert!(
            (extrapolated - limit).norm() < 1e-5 * limit.norm(),
            "{extrapolated} vs {limit}"
        );
    }
}
