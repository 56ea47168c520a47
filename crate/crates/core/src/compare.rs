//! Analytic density against a Monte Carlo histogram, bin by bin.
//!
//! The analytic value of a bin is its average of S(x), from a three-point
//! Gauss-Legendre rule, so it compares directly with counts / (N p width).

use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};
use statrs::function::erf::erfc;

use crate::density::{eval_curve, PointFailure};
use crate::error::{Error, Result};
use crate::montecarlo::{histogram_density, sample_ensemble, Histogram, MCConfig};
use crate::quadrature::QuadratureConfig;
use crate::spectral::{ModelParams, Spectrum, Usage};

/// Gauss-Legendre nodes on [-1, 1] and weights normalised to sum 1.
const GL_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Minimum fraction of occupied bins within 3 standard errors.
    pub min_within_3sigma: f64,
    /// Maximum L1 distance Σ |S̄ - ρ| · width.
    pub max_l1: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_within_3sigma: 0.95,
            max_l1: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub left: f64,
    pub right: f64,
    pub analytic: f64,
    pub mc_density: f64,
    /// Standard error from the observed count.
    pub mc_stderr: f64,
    /// Eigenvalues expected in the bin under the analytic density.
    pub expected_count: f64,
    pub count: u64,
}

impl BinRow {
    pub fn center(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    /// True unless the observed count lies in a Poisson tail rarer than a
    /// `sigmas` normal deviation on that side.
    pub fn within(&self, sigmas: f64) -> bool {
        let tail = 0.5 * erfc(sigmas / std::f64::consts::SQRT_2);
        let Ok(poisson) = Poisson::new(self.expected_count) else {
            return self.count == 0;
        };
        let below = poisson.cdf(self.count);
        let above = if self.count == 0 {
            1.0
        } else {
            poisson.sf(self.count - 1)
        };
        below > tail && above > tail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub l1: f64,
    pub within_3sigma: f64,
    pub occupied_bins: usize,
    /// Analytic ∫ S dx over the histogram range.
    pub analytic_mass: f64,
    /// Analytic ∫ x S dx over the histogram range.
    pub analytic_mean: f64,
    /// Sample mean of the eigenvalues.
    pub mc_mean: f64,
    /// (n/p) Σ Λ_j.
    pub expected_mean: f64,
    pub underflow: u64,
    pub overflow: u64,
    pub analytic_failures: Vec<PointFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<BinRow>,
    pub summary: Summary,
}

impl Comparison {
    pub fn passes(&self, t: &Thresholds) -> bool {
        self.summary.analytic_failures.is_empty()
            && self.summary.within_3sigma >= t.min_within_3sigma
            && self.summary.l1 <= t.max_l1
    }

    /// `x,analytic,mc_density,mc_stderr` per bin centre under a `#` JSON
    /// metadata line.
    pub fn to_csv(&self, meta: &serde_json::Value) -> String {
        let mut out = format!("# {meta}\nx,analytic,mc_density,mc_stderr\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                r.center(),
                r.analytic,
                r.mc_density,
                r.mc_stderr
            ));
        }
        out
    }
}

/// Compares a histogram with the analytic density of the same ensemble.
pub fn compare_histogram(
    hist: &Histogram,
    spectrum: &Spectrum,
    params: &ModelParams,
    quad: &QuadratureConfig,
) -> Result<Comparison> {
    params.check(Usage::Analytic)?;
    if hist.p != params.p {
        return Err(Error::DimensionMismatch {
            expected: params.p,
            got: hist.p,
        });
    }
    if hist.edges.first().is_some_and(|&e| e < 0.0) {
        return Err(Error::Config("histogram range must start at or above 0".into()));
    }
    let grid: Vec<f64> = hist
        .edges
        .windows(2)
        .flat_map(|w| {
            let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            GL_NODES.map(|t| c + h * t)
        })
        .collect();
    let curve = eval_curve(&grid, spectrum, params, quad)?;
    let density = hist.density();
    let stderr = hist.stderr();
    let samples = (hist.num_matrices * hist.p) as f64;

    let mut rows = Vec::with_capacity(hist.num_bins());
    let (mut mass, mut mean) = (0.0, 0.0);
    for (b, w) in hist.edges.windows(2).enumerate() {
        let width = w[1] - w[0];
        let (mut avg, mut first) = (0.0, 0.0);
        let nodes = 3 * b..3 * b + 3;
        for ((x, s), wt) in curve.xs[nodes.clone()].iter().zip(&curve.values[nodes]).zip(GL_WEIGHTS) {
            avg += wt * s;
            first += wt * x * s;
        }
        mass += avg * width;
        mean += first * width;
        rows.push(BinRow {
            left: w[0],
            right: w[1],
            analytic: avg,
            mc_density: density[b],
            mc_stderr: stderr[b],
            expected_count: avg.max(0.0) * samples * width,
            count: hist.counts[b],
        });
    }
    let occupied = rows.iter().filter(|r| r.count > 0).count();
    let within = rows.iter().filter(|r| r.count > 0 && r.within(3.0)).count();
    let l1 = rows
        .iter()
        .map(|r| (r.analytic - r.mc_density).abs() * (r.right - r.left))
        .filter(|v| v.is_finite())
        .sum();
    // From bin centres; `compare` replaces it with the exact sample mean.
    let in_range: u64 = hist.counts.iter().sum();
    let mc_mean = rows.iter().map(|r| r.center() * r.count as f64).sum::<f64>() / in_range.max(1) as f64;
    Ok(Comparison {
        rows,
        summary: Summary {
            l1,
            within_3sigma: if occupied == 0 {
                0.0
            } else {
                within as f64 / occupied as f64
            },
            occupied_bins: occupied,
            analytic_mass: mass,
            analytic_mean: mean,
            mc_mean,
            expected_mean: params.n as f64 / params.p as f64 * spectrum.sum(),
            underflow: hist.underflow,
            overflow: hist.overflow,
            analytic_failures: curve.meta.failures,
        },
    })
}

/// Samples the ensemble, bins it and compares with the analytic density.
pub fn compare(
    spectrum: &Spectrum,
    params: &ModelParams,
    quad: &QuadratureConfig,
    mc: &MCConfig,
) -> Result<Comparison> {
    params.check(Usage::Analytic)?;
    mc.check()?;
    let ensemble = sample_ensemble(spectrum, params, mc.num_matrices, mc.seed)?;
    let hist = histogram_density(&ensemble, mc)?;
    let mut cmp = compare_histogram(&hist, spectrum, params, quad)?;
    cmp.summary.mc_mean = ensemble.mean_trace() / params.p as f64;
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_squared_comparison() {
        let s = Spectrum::new(&[1.0]).unwrap();
        let p = ModelParams::real(1, 4);
        let mc = MCConfig {
            num_matrices: 200_000,
            seed: 11,
            bin_width: 0.5,
            range: Some((0.0, 30.0)),
        };
        let cmp = compare(&s, &p, &QuadratureConfig::default(), &mc).unwrap();
        assert!(cmp.summary.l1 < 0.01, "{:?}", cmp.summary);
        assert!(cmp.summary.within_3sigma >= 0.95);
        assert!((cmp.summary.analytic_mass - 1.0).abs() < 1e-4);
        assert!((cmp.summary.mc_mean - 4.0).abs() < 0.05);
        assert!(cmp.passes(&Thresholds::default()));
        let csv = cmp.to_csv(&serde_json::json!({}));
        assert_eq!(csv.lines().count(), 2 + 60);
    }

    fn row(expected_count: f64, count: u64) -> BinRow {
        BinRow {
            left: 0.0,
            right: 1.0,
            analytic: 0.0,
            mc_density: 0.0,
            mc_stderr: 0.0,
            expected_count,
            count,
        }
    }

    #[test]
    fn poisson_bin_test() {
        // Large counts reduce to the normal rule.
        let mu: f64 = 10_000.0;
        assert!(row(mu, (mu + 2.9 * mu.sqrt()) as u64).within(3.0));
        assert!(!row(mu, (mu + 3.1 * mu.sqrt()) as u64).within(3.0));
        assert!(!row(mu, (mu - 3.1 * mu.sqrt()) as u64).within(3.0));
        // One eigenvalue where few are expected is not an outlier.
        assert!(row(0.02, 1).within(3.0));
        assert!(row(6.3, 1).within(3.0));
        assert!(!row(1e-4, 2).within(3.0));
        assert!(!row(0.0, 1).within(3.0));
    }

    #[test]
    fn dimension_mismatch() {
        let hist = Histogram {
            edges: vec![0.0, 1.0],
            counts: vec![1],
            num_matrices: 1,
            p: 2,
            underflow: 0,
            overflow: 0,
        };
        let s = Spectrum::new(&[1.0]).unwrap();
        let r = compare_histogram(&hist, &s, &ModelParams::real(1, 4), &QuadratureConfig::default());
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
