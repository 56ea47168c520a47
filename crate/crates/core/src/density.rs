//! Analytic eigenvalue density S(x) of real Wishart correlation matrices:
//! single points, grids, serialisation and moment checks.
//!
//! x is an eigenvalue of WW† itself, not divided by n.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrand::IntegrandContext;
use crate::quadrature::{imaginary_part_cells, imaginary_part_epsilon, Backend, QuadratureConfig};
use crate::spectral::{Beta, ModelParams, Spectrum, Usage};

/// Negative values down to this fraction of the peak are quadrature noise
/// and are clipped to zero.
pub const CLIP_FRACTION: f64 = 1e-6;
/// Absolute agreement accepted by the backend cross-check near zero density.
pub const CROSS_CHECK_ABS: f64 = 1e-8;
/// The density must fall below this fraction of the peak at both ends of a
/// curve before its moments are trusted.
pub const COVERAGE_FRACTION: f64 = 1e-8;

fn check_inputs(spectrum: &Spectrum, params: &ModelParams) -> Result<()> {
    params.check(Usage::Analytic)?;
    if spectrum.len() != params.p {
        return Err(Error::DimensionMismatch {
            expected: params.p,
            got: spectrum.len(),
        });
    }
    Ok(())
}

/// S(0): zero when the smallest-eigenvalue density vanishes at the origin
/// (n ≥ p + 2). Otherwise the integral representation does not reach x = 0;
/// the limit is finite for n = p + 1 and infinite for n = p.
fn at_origin(params: &ModelParams) -> Result<f64> {
    if params.n >= params.p + 2 {
        Ok(0.0)
    } else {
        Err(Error::Domain(format!(
            "S(0) is only available as a limit for n = {} < p + 2 = {}; use a grid starting above 0",
            params.n,
            params.p + 2
        )))
    }
}

fn cells_value(ctx: &IntegrandContext, config: &QuadratureConfig) -> Result<f64> {
    let r = imaginary_part_cells(ctx, config)?;
    if !r.converged {
        return Err(Error::NoConvergence(format!(
            "cell quadrature at x = {} did not reach rel_tol {:e}",
            ctx.x(),
            config.rel_tol
        )));
    }
    Ok(r.value)
}

fn agree(cells: f64, epsilon: f64, config: &QuadratureConfig) -> bool {
    (cells - epsilon).abs() <= (config.cross_check_tol * cells.abs()).max(CROSS_CHECK_ABS)
}

/// S(x) from the configured backend. With `Backend::Both` the two backends
/// must agree or `BackendDisagreement` is returned.
pub fn eval_point(x: f64, spectrum: &Spectrum, params: &ModelParams, config: &QuadratureConfig) -> Result<f64> {
    check_inputs(spectrum, params)?;
    config.check()?;
    if x == 0.0 {
        return at_origin(params);
    }
    let ctx = IntegrandContext::new(x, spectrum, params)?.with_pole_width(config.pole_width);
    match config.backend {
        Backend::Cells => cells_value(&ctx, config),
        Backend::Epsilon => Ok(imaginary_part_epsilon(&ctx, config)?.value),
        Backend::Both => {
            let cells = cells_value(&ctx, config)?;
            let epsilon = imaginary_part_epsilon(&ctx, config)?.value;
            if agree(cells, epsilon, config) {
                Ok(cells)
            } else {
                Err(Error::BackendDisagreement { x, cells, epsilon })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub x: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub index: usize,
    pub x: f64,
    pub cells: f64,
    /// `None` when the epsilon backend itself failed.
    pub epsilon: Option<f64>,
    pub agree: bool,
}

/// Everything needed to reproduce a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMeta {
    pub version: String,
    pub p: usize,
    pub n: usize,
    pub beta: Beta,
    pub spectrum: Vec<f64>,
    pub quadrature: QuadratureConfig,
    /// Indices whose small negative values were set to zero.
    pub clipped: Vec<usize>,
    pub failures: Vec<PointFailure>,
    pub cross_checks: Vec<CrossCheck>,
}

/// Evaluated curve; failed points hold NaN and are listed in `meta.failures`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: DensityMeta,
}

#[derive(Serialize, Deserialize)]
struct CurveDoc {
    meta: DensityMeta,
    xs: Vec<f64>,
    values: Vec<Option<f64>>,
}

impl DensityCurve {
    /// No failed points and every cross-check passed.
    pub fn is_clean(&self) -> bool {
        self.meta.failures.is_empty() && self.meta.cross_checks.iter().all(|c| c.agree)
    }

    pub fn peak(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
    }

    /// `x,density` rows under a `#`-prefixed JSON metadata line.
    pub fn to_csv(&self) -> String {
        let meta = serde_json::to_string(&self.meta).expect("metadata serialises");
        let mut out = format!("# {meta}\nx,density\n");
        for (x, v) in self.xs.iter().zip(&self.values) {
            out.push_str(&format!("{x},{v:e}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = CurveDoc {
            meta: self.meta.clone(),
            xs: self.xs.clone(),
            values: self.values.iter().map(|v| v.is_finite().then_some(*v)).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("curve serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CurveDoc = serde_json::from_str(text)?;
        if doc.xs.len() != doc.values.len() {
            return Err(Error::BadDimensions(format!(
                "{} xs but {} values",
                doc.xs.len(),
                doc.values.len()
            )));
        }
        Ok(DensityCurve {
            xs: doc.xs,
            values: doc.values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            meta: doc.meta,
        })
    }
}

/// Default grid range [0, nΛ_max + 16·sqrt(2n)·Λ_max]: the largest
/// eigenvalue's bulk sits near nΛ_max with width about sqrt(2n)Λ_max.
pub fn default_range(spectrum: &Spectrum, params: &ModelParams) -> (f64, f64) {
    let n = params.n as f64;
    let lmax = spectrum.max();
    (0.0, n * lmax + 16.0 * (2.0 * n).sqrt() * lmax)
}

/// Uniform grid of `count` points on [lo, hi], both ends included.
pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || (count > 1 && hi <= lo) {
        return Err(Error::Config(format!("invalid grid {lo}:{hi}:{count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count)
        .map(|k| if k + 1 == count { hi } else { lo + k as f64 * step })
        .collect())
}

/// Uniform grid on [lo, hi] merged with finer windows around each n·Λ_j
/// (±8 widths of sqrt(2n)·Λ_j, 16 points per width), so that narrow peaks
/// from small eigenvalues are resolved for moment integration.
pub fn resolving_grid(spectrum: &Spectrum, params: &ModelParams, lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    let mut grid = uniform_grid(lo, hi, count)?;
    let n = params.n as f64;
    for &l in spectrum.values() {
        let w = (2.0 * n).sqrt() * l;
        let (a, b) = ((n * l - 8.0 * w).max(lo), (n * l + 8.0 * w).min(hi));
        if b > a {
            grid.extend(uniform_grid(a, b, 257)?);
        }
    }
    grid.sort_by(f64::total_cmp);
    // merge points closer than a relative 1e-12
    grid.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs().max(1.0));
    Ok(grid)
}

/// S on a strictly increasing grid of non-negative points. Points are
/// evaluated in parallel and returned in grid order. With `Backend::Both`
/// every `cross_check_stride`-th point is also evaluated by the epsilon
/// backend and recorded.
pub fn eval_curve(
    grid: &[f64],
    spectrum: &Spectrum,
    params: &ModelParams,
    config: &QuadratureConfig,
) -> Result<DensityCurve> {
    check_inputs(spectrum, params)?;
    config.check()?;
    if let Some(k) = grid.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!(
            "grid point {k} ({}) is not a non-negative number",
            grid[k]
        )));
    }
    if let Some(k) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::UnsortedGrid(k + 1));
    }

    struct Outcome {
        value: Result<f64>,
        check: Option<CrossCheck>,
    }
    let outcomes: Vec<Outcome> = grid
        .par_iter()
        .enumerate()
        .map(|(index, &x)| {
            if x == 0.0 {
                return Outcome {
                    value: at_origin(params),
                    check: None,
                };
            }
            let ctx = match IntegrandContext::new(x, spectrum, params) {
                Ok(c) => c.with_pole_width(config.pole_width),
                Err(e) => {
                    return Outcome {
                        value: Err(e),
                        check: None,
                    }
                }
            };
            let value = match config.backend {
                Backend::Epsilon => imaginary_part_epsilon(&ctx, config).map(|r| r.value),
                _ => cells_value(&ctx, config),
            };
            let check = match (&value, config.backend) {
                (Ok(cells), Backend::Both) if index % config.cross_check_stride == 0 => {
                    let epsilon = imaginary_part_epsilon(&ctx, config).ok().map(|r| r.value);
                    Some(CrossCheck {
                        index,
                        x,
                        cells: *cells,
                        epsilon,
                        agree: epsilon.is_some_and(|e| agree(*cells, e, config)),
                    })
                }
                _ => None,
            };
            Outcome { value, check }
        })
        .collect();

    let mut values = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    let mut cross_checks = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o.value {
            Ok(v) => values.push(v),
            Err(e) => {
                values.push(f64::NAN);
                failures.push(PointFailure {
                    index,
                    x: grid[index],
                    error: e.to_string(),
                });
            }
        }
        cross_checks.extend(o.check);
    }

    let peak = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let mut clipped = Vec::new();
    for (index, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -CLIP_FRACTION * peak {
                return Err(Error::NegativeDensity {
                    x: grid[index],
                    value: *v,
                    peak,
                });
            }
            *v = 0.0;
            clipped.push(index);
        }
    }

    Ok(DensityCurve {
        xs: grid.to_vec(),
        values,
        meta: DensityMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            p: params.p,
            n: params.n,
            beta: params.beta,
            spectrum: spectrum.values().to_vec(),
            quadrature: config.clone(),
            clipped,
            failures,
            cross_checks,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Trapezoidal ∫ S dx.
    pub mass: f64,
    /// Trapezoidal ∫ x S dx.
    pub mean: f64,
    /// (n/p) Σ Λ_j, the exact first moment.
    pub expected_mean: f64,
    pub mass_error: f64,
    pub mean_error: f64,
}

/// Trapezoidal zeroth and first moments on the curve's own grid.
pub fn check_moments(curve: &DensityCurve) -> Result<MomentReport> {
    if curve.values.len() < 2 {
        return Err(Error::InsufficientCoverage("need at least two points".into()));
    }
    if !curve.meta.failures.is_empty() || curve.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientCoverage("curve has failed points".into()));
    }
    let peak = curve.peak();
    let (first, last) = (curve.values[0], curve.values[curve.values.len() - 1]);
    if first > COVERAGE_FRACTION * peak || last > COVERAGE_FRACTION * peak {
        return Err(Error::InsufficientCoverage(format!(
            "end values {first:e} and {last:e} exceed {COVERAGE_FRACTION:e} x peak {peak:e}"
        )));
    }
    let (mut mass, mut mean) = (0.0, 0.0);
    for k in 1..curve.xs.len() {
        let (x0, x1) = (curve.xs[k - 1], curve.xs[k]);
        let (s0, s1) = (curve.values[k - 1], curve.values[k]);
        mass += 0.5 * (x1 - x0) * (s0 + s1);
        mean += 0.5 * (x1 - x0) * (x0 * s0 + x1 * s1);
    }
    let m = &curve.meta;
    let expected_mean = m.n as f64 / m.p as f64 * m.spectrum.iter().sum::<f64>();
    Ok(MomentReport {
        mass,
        mean,
        expected_mean,
        mass_error: mass - 1.0,
        mean_error: mean - expected_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::chisq_oracle;
    use proptest::prelude::*;

    fn spec(l: &[f64]) -> Spectrum {
        Spectrum::new(l).unwrap()
    }

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn chi_squared_point() {
        let v = eval_point(2.0, &spec(&[1.0]), &ModelParams::real(1, 4), &cfg()).unwrap();
        assert!((v - (-1.0f64).exp() / 2.0).abs() < 1e-9);
    }

    #[test]
    fn vanishes_near_origin() {
        let v = eval_point(1e-6, &spec(&[1.0, 0.4]), &ModelParams::real(2, 6), &cfg()).unwrap();
        assert!(v.abs() < 1e-3, "{v}");
        assert_eq!(
            eval_point(0.0, &spec(&[1.0, 0.4]), &ModelParams::real(2, 6), &cfg()).unwrap(),
            0.0
        );
        assert!(eval_point(0.0, &spec(&[1.0, 0.4]), &ModelParams::real(2, 3), &cfg()).is_err());
    }

    #[test]
    fn rejects_complex_ensembles() {
        let params = ModelParams::new(1, 4, Beta::Complex);
        assert_eq!(
            eval_point(1.0, &spec(&[1.0]), &params, &cfg()),
            Err(Error::Beta2NotSupported)
        );
    }

    #[test]
    fn three_point_curve_matches_oracle() {
        let curve = eval_curve(&[0.5, 2.0, 6.0], &spec(&[1.0]), &ModelParams::real(1, 4), &cfg()).unwrap();
        for (x, v) in curve.xs.iter().zip(&curve.values) {
            assert!((v - chisq_oracle(*x, 4, 1.0).unwrap()).abs() < 1e-6);
        }
        assert!(curve.is_clean());
    }

    #[test]
    fn grid_preconditions() {
        let (s, p) = (spec(&[1.0]), ModelParams::real(1, 4));
        let empty = eval_curve(&[], &s, &p, &cfg()).unwrap();
        assert!(empty.xs.is_empty() && empty.values.is_empty());
        assert_eq!(
            eval_curve(&[1.0, 3.0, 2.0], &s, &p, &cfg()).unwrap_err(),
            Error::UnsortedGrid(2)
        );
        assert!(eval_curve(&[-1.0, 2.0], &s, &p, &cfg()).is_err());
    }

    #[test]
    fn chi_squared_moments() {
        let grid = uniform_grid(0.0, 60.0, 600).unwrap();
        let curve = eval_curve(&grid, &spec(&[1.0]), &ModelParams::real(1, 4), &cfg()).unwrap();
        let m = check_moments(&curve).unwrap();
        assert!(m.mass_error.abs() < 1e-3, "{m:?}");
        assert!((m.mean - 4.0).abs() < 1e-2, "{m:?}");
        assert_eq!(m.expected_mean, 4.0);
    }

    #[test]
    fn truncated_curve_is_reported() {
        let grid = uniform_grid(0.0, 8.0, 50).unwrap();
        let curve = eval_curve(&grid, &spec(&[1.0]), &ModelParams::real(1, 4), &cfg()).unwrap();
        assert!(matches!(check_moments(&curve), Err(Error::InsufficientCoverage(_))));
    }

    #[test]
    fn cross_checks_are_recorded() {
        let config = QuadratureConfig {
            backend: Backend::Both,
            cross_check_stride: 2,
            ..cfg()
        };
        let curve = eval_curve(&[1.0, 2.0, 3.0], &spec(&[1.0, 0.4]), &ModelParams::real(2, 6), &config).unwrap();
        let idx: Vec<usize> = curve.meta.cross_checks.iter().map(|c| c.index).collect();
        assert_eq!(idx, vec![0, 2]);
        assert!(curve.is_clean(), "{:?}", curve.meta.cross_checks);
    }

    #[test]
    fn serialisation_round_trip() {
        let mut curve = eval_curve(&[1.0, 2.0], &spec(&[1.0]), &ModelParams::real(1, 4), &cfg()).unwrap();
        curve.values[1] = f64::NAN;
        let back = DensityCurve::from_json(&curve.to_json()).unwrap();
        assert_eq!(back.xs, curve.xs);
        assert_eq!(back.values[0], curve.values[0]);
        assert!(back.values[1].is_nan());
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# {"));
        assert_eq!(lines.next().unwrap(), "x,density");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn resolving_grid_refines_small_eigenvalues() {
        let s = spec(&[1.0, 0.03]);
        let p = ModelParams::real(2, 200);
        let g = resolving_grid(&s, &p, 0.0, 600.0, 240).unwrap();
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!((g[0], *g.last().unwrap()), (0.0, 600.0));
        // the peak near 6 has width 0.6 and gets 16 points per width
        let near = g.iter().filter(|&&x| (5.4..=6.6).contains(&x)).count();
        assert!(near >= 32, "{near}");
    }

    #[test]
    fn grid_helper() {
        assert_eq!(uniform_grid(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(uniform_grid(2.0, 2.0, 1).unwrap(), vec![2.0]);
        assert!(uniform_grid(0.0, 1.0, 0).is_err());
        assert!(uniform_grid(1.0, 0.0, 4).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scale_covariance(x in 0.3f64..8.0, l2 in 0.1f64..0.8, sigma in prop::sample::select(vec![0.5, 2.0])) {
            let p = ModelParams::real(2, 6);
            let a = eval_point(x, &spec(&[1.0, l2]), &p, &cfg()).unwrap();
            let b = eval_point(sigma * x, &spec(&[sigma, sigma * l2]), &p, &cfg()).unwrap();
            prop_assert!((b - a / sigma).abs() <= 1e-6 * a.abs().max(1e-8), "{} vs {}", b, a / sigma);
        }

        #[test]
        fn permutation_invariance(x in 0.5f64..10.0, perm in 0usize..6) {
            let base = [1.2, 0.7, 0.3];
            let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let shuffled: Vec<f64> = orders[perm].iter().map(|&k| base[k]).collect();
            let p = ModelParams::real(3, 8);
            let a = eval_point(x, &spec(&base), &p, &cfg()).unwrap();
            let b = eval_point(x, &spec(&shuffled), &p, &cfg()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
