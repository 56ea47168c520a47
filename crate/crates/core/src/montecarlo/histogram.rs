use serde::{Deserialize, Serialize};

use super::{Ensemble, MCConfig};
use crate::error::{Error, Result};

/// Fixed-width histogram of sampled eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub num_matrices: usize,
    pub p: usize,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    fn norm(&self) -> f64 {
        (self.num_matrices * self.p) as f64
    }

    /// Per-eigenvalue density, comparable to the analytic S(x).
    pub fn density(&self) -> Vec<f64> {
        let scale = self.norm();
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, w)| c as f64 / (scale * (w[1] - w[0])))
            .collect()
    }

    /// Poisson standard error of each density value.
    pub fn stderr(&self) -> Vec<f64> {
        let scale = self.norm();
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, w)| (c as f64).sqrt() / (scale * (w[1] - w[0])))
            .collect()
    }

    /// Σ density · width; 1 unless samples fell outside the range.
    pub fn mass(&self) -> f64 {
        self.density()
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum()
    }

    pub fn to_csv(&self, meta: &serde_json::Value) -> String {
        let mut out = format!("# {}\nbin_left,bin_right,count,density\n", meta);
        for ((w, c), d) in self.edges.windows(2).zip(&self.counts).zip(self.density()) {
            out.push_str(&format!("{},{},{},{:e}\n", w[0], w[1], c, d));
        }
        out
    }

    pub fn to_json(&self, meta: &serde_json::Value) -> String {
        let doc = serde_json::json!({
            "meta": meta,
            "edges": self.edges,
            "counts": self.counts,
            "density": self.density(),
            "underflow": self.underflow,
            "overflow": self.overflow,
        });
        serde_json::to_string_pretty(&doc).expect("histogram serialises")
    }
}

/// Bins every eigenvalue of the ensemble at `config.bin_width`, with edges
/// at `x_min + k * bin_width`.
pub fn histogram_density(ensemble: &Ensemble, config: &MCConfig) -> Result<Histogram> {
    config.check()?;
    if ensemble.eigenvalues.is_empty() || ensemble.p == 0 {
        return Err(Error::EmptyInput);
    }
    let bw = config.bin_width;
    let (lo, nbins) = match config.range {
        Some((lo, hi)) => (lo, ((hi - lo) / bw - 1e-9).ceil().max(1.0) as usize),
        None => {
            let min = ensemble.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            let max = ensemble.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = (min.max(0.0) / bw).floor() * bw;
            (lo, ((max - lo) / bw).floor() as usize + 1)
        }
    };
    let edges: Vec<f64> = (0..=nbins).map(|k| lo + k as f64 * bw).collect();
    let mut counts = vec![0u64; nbins];
    let (mut underflow, mut overflow) = (0, 0);
    for &v in &ensemble.eigenvalues {
        if v < lo {
            underflow += 1;
            continue;
        }
        let k = ((v - lo) / bw).floor() as usize;
        if k >= nbins {
            overflow += 1;
        } else {
            counts[k] += 1;
        }
    }
    Ok(Histogram {
        edges,
        counts,
        num_matrices: ensemble.num_matrices(),
        p: ensemble.p,
        underflow,
        overflow,
    })
}
