//! Imaginary part of the quadrant integral of the branched integrand.
//!
//! Two independent backends are provided. The cell backend splits each axis
//! at the singular points s_j and resolves the branch phases analytically;
//! the epsilon backend evaluates the complex integrand at x + iε and
//! extrapolates ε → 0. The cell backend is the fast path and is certified
//! against the epsilon backend on a subsample of points.

mod cells;
pub mod de;
mod epsilon;

pub use cells::{imaginary_part_cells, integrate_cell, interval_moments, CellReport, CellValue, Factor, Moments};
pub use epsilon::{imaginary_part_epsilon, EpsilonReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrand::{IntegrandContext, DEFAULT_POLE_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Cells,
    Epsilon,
    /// Cells everywhere, cross-checked by epsilon on every
    /// `cross_check_stride`-th grid point.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Target relative accuracy of each one-dimensional integral.
    pub rel_tol: f64,
    /// Refinement cap of the double-exponential rules.
    pub max_levels: u32,
    /// Initial truncation of the unbounded interval; `None` uses
    /// max(4n, s_p + 40).
    pub tail_cut: Option<f64>,
    pub backend: Backend,
    /// Strictly decreasing ε values, in units of x.
    pub epsilon_schedule: Vec<f64>,
    /// Relative accuracy target of the ε → 0 extrapolation.
    pub epsilon_tol: f64,
    pub cross_check_stride: usize,
    /// Relative tolerance of the backend cross-check.
    pub cross_check_tol: f64,
    /// Pole flag width relative to x.
    pub pole_width: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-7,
            max_levels: 12,
            tail_cut: None,
            backend: Backend::Cells,
            epsilon_schedule: (0..10).map(|k| 1e-2 * 0.5f64.powi(k)).collect(),
            epsilon_tol: 1e-6,
            cross_check_stride: 8,
            cross_check_tol: 1e-4,
            pole_width: DEFAULT_POLE_WIDTH,
        }
    }
}

impl QuadratureConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_levels < 2 || self.max_levels > 20 {
            return Err(Error::Config(format!(
                "max_levels must lie in [2, 20], got {}",
                self.max_levels
            )));
        }
        if let Some(t) = self.tail_cut {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tail_cut must be positive, got {t}")));
            }
        }
        let s = &self.epsilon_schedule;
        if s.len() < 3 {
            return Err(Error::Config(format!(
                "epsilon schedule needs at least 3 entries, got {}",
                s.len()
            )));
        }
        if s.iter().any(|&e| !(e > 0.0 && e.is_finite())) || s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "epsilon schedule must be positive and strictly decreasing".into(),
            ));
        }
        if !(self.epsilon_tol > 0.0) || !(self.cross_check_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.cross_check_stride == 0 {
            return Err(Error::Config("cross_check_stride must be at least 1".into()));
        }
        if !(self.pole_width >= 0.0) {
            return Err(Error::Config(format!(
                "pole_width must be non-negative, got {}",
                self.pole_width
            )));
        }
        Ok(())
    }
}

/// One rectangle (interval i for r₁) x (interval j for r₂).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
    /// (i + j) odd: the only cells with a non-zero imaginary part.
    pub contributing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    /// 0 = u₀ < u₁ < … < u_p < u_{p+1} = ∞.
    pub cuts: Vec<f64>,
    pub cells: Vec<Cell>,
}

impl CellPartition {
    pub fn num_intervals(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn contributing(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.contributing)
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.cuts[i], self.cuts[i + 1])
    }
}

pub fn build_partition(ctx: &IntegrandContext) -> CellPartition {
    let mut cuts = Vec::with_capacity(ctx.p() + 2);
    cuts.push(0.0);
    cuts.extend_from_slice(ctx.singular_points());
    cuts.push(f64::INFINITY);
    let m = cuts.len() - 1;
    let cells = (0..m)
        .flat_map(|i| {
            (0..m).map(move |j| Cell {
                i,
                j,
                contributing: (i + j) % 2 == 1,
            })
        })
        .collect();
    CellPartition { cuts, cells }
}

/// Imaginary part of the quadrant integral, constants included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureValue {
    pub value: f64,
    pub converged: bool,
}

/// Dispatches to the configured backend. `Both` is resolved per grid point
/// by the caller; here it means cells.
pub fn imaginary_part(ctx: &IntegrandContext, config: &QuadratureConfig) -> Result<QuadratureValue> {
    match config.backend {
        Backend::Cells | Backend::Both => {
            let r = imaginary_part_cells(ctx, config)?;
            Ok(QuadratureValue {
                value: r.value,
                converged: r.converged,
            })
        }
        Backend::Epsilon => {
            let r = imaginary_part_epsilon(ctx, config)?;
            Ok(QuadratureValue {
                value: r.value,
                converged: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{ModelParams, Spectrum};

    fn ctx(x: f64, lambdas: &[f64]) -> IntegrandContext {
        let s = Spectrum::new(lambdas).unwrap();
        IntegrandContext::new(x, &s, &ModelParams::real(lambdas.len(), lambdas.len() + 3)).unwrap()
    }

    #[test]
    fn single_series_partition() {
        let part = build_partition(&ctx(1.0, &[1.0]));
        assert_eq!(part.cuts, vec![0.0, 0.5, f64::INFINITY]);
        assert_eq!(part.cells.len(), 4);
        let c: Vec<(usize, usize)> = part.contributing().map(|c| (c.i, c.j)).collect();
        assert_eq!(c, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn cell_counts() {
        let p5 = build_partition(&ctx(2.0, &[1.44, 0.64, 0.49, 0.25, 0.16]));
        assert_eq!((p5.cells.len(), p5.contributing().count()), (36, 18));
        let p2 = build_partition(&ctx(2.0, &[1.0, 0.5]));
        assert_eq!((p2.cells.len(), p2.contributing().count()), (9, 4));
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig::default().check().is_ok());
        let short = QuadratureConfig {
            epsilon_schedule: vec![1e-2, 1e-3],
            ..Default::default()
        };
        assert!(matches!(short.check(), Err(Error::Config(_))));
        let unsorted = QuadratureConfig {
            epsilon_schedule: vec![1e-2, 1e-3, 1e-2],
            ..Default::default()
        };
        assert!(unsorted.check().is_err());
        let bad_tol = QuadratureConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(bad_tol.check().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = QuadratureConfig {
            backend: Backend::Both,
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<QuadratureConfig>(&text).unwrap(), cfg);
        let partial: QuadratureConfig = serde_json::from_str(r#"{"rel_tol": 1e-9}"#).unwrap();
        assert_eq!(partial.rel_tol, 1e-9);
        assert_eq!(partial.max_levels, 12);
    }
}
