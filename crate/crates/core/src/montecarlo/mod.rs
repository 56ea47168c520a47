//! Monte Carlo sampling of the Wishart ensemble, histogram density
//! estimates and the closed-form p = 1 oracle.
//!
//! Every matrix draws from its own ChaCha stream selected by
//! `(seed, matrix_index)`, so an ensemble is reproducible bit for bit no
//! matter how the work is split across threads.

mod eigen;
mod histogram;

pub use eigen::{hermitian_eigenvalues, symmetric_eigenvalues};
pub use histogram::{histogram_density, Histogram};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::spectral::{Beta, ModelParams, Spectrum};

/// Matrices per parallel work item. Chunking only affects scheduling.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub num_matrices: usize,
    pub seed: u64,
    pub bin_width: f64,
    /// Histogram range; `None` picks one covering every sample.
    pub range: Option<(f64, f64)>,
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig {
            num_matrices: 100_000,
            seed: 0,
            bin_width: 3.0,
            range: None,
        }
    }
}

impl MCConfig {
    pub fn check(&self) -> Result<()> {
        if self.num_matrices == 0 {
            return Err(Error::Config("num_matrices must be at least 1".into()));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::Config(format!(
                "bin width must be positive, got {}",
                self.bin_width
            )));
        }
        if let Some((lo, hi)) = self.range {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::Config(format!("invalid histogram range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Eigenvalues of many sampled matrices, `p` per matrix, in matrix order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub p: usize,
    pub eigenvalues: Vec<f64>,
}

impl Ensemble {
    pub fn num_matrices(&self) -> usize {
        self.eigenvalues.len().checked_div(self.p).unwrap_or(0)
    }

    pub fn matrix(&self, k: usize) -> &[f64] {
        &self.eigenvalues[k * self.p..(k + 1) * self.p]
    }

    /// Mean of tr(W W†) over the ensemble.
    pub fn mean_trace(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.num_matrices() as f64
    }
}

fn rng_for(seed: u64, matrix_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(matrix_index);
    rng
}

/// Draws W (p x n, row j with entry variance Λ_j) for one matrix and returns
/// the eigenvalues of W W†, descending.
pub fn sample_eigenvalues(spectrum: &Spectrum, params: &ModelParams, matrix_index: u64, seed: u64) -> Result<Vec<f64>> {
    let p = params.p;
    let n = params.n;
    if spectrum.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: spectrum.len(),
        });
    }
    let mut rng = rng_for(seed, matrix_index);
    match params.beta {
        Beta::Real => {
            let mut w = vec![0.0; p * n];
            for (j, &lambda) in spectrum.values().iter().enumerate() {
                let sd = lambda.sqrt();
                for v in &mut w[j * n..(j + 1) * n] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = sd * z;
                }
            }
            let mut a = vec![0.0; p * p];
            for i in 0..p {
                for j in 0..=i {
                    let s: f64 = w[i * n..(i + 1) * n]
                        .iter()
                        .zip(&w[j * n..(j + 1) * n])
                        .map(|(x, y)| x * y)
                        .sum();
                    a[i * p + j] = s;
                    a[j * p + i] = s;
                }
            }
            symmetric_eigenvalues(&a, p)
        }
        Beta::Complex => {
            let mut w = vec![Complex64::new(0.0, 0.0); p * n];
            for (j, &lambda) in spectrum.values().iter().enumerate() {
                let sd = (0.5 * lambda).sqrt();
                for v in &mut w[j * n..(j + 1) * n] {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    *v = Complex64::new(sd * re, sd * im);
                }
            }
            let mut a = vec![Complex64::new(0.0, 0.0); p * p];
            for i in 0..p {
                for j in 0..=i {
                    let s: Complex64 = w[i * n..(i + 1) * n]
                        .iter()
                        .zip(&w[j * n..(j + 1) * n])
                        .map(|(x, y)| x * y.conj())
                        .sum();
                    a[i * p + j] = s;
                    a[j * p + i] = s.conj();
                }
                a[i * p + i].im = 0.0;
            }
            hermitian_eigenvalues(&a, p)
        }
    }
}

/// Samples `num_matrices` matrices in parallel. The result depends only on
/// the inputs, not on the thread pool.
pub fn sample_ensemble(spectrum: &Spectrum, params: &ModelParams, num_matrices: usize, seed: u64) -> Result<Ensemble> {
    params.check(crate::spectral::Usage::Sampling)?;
    let chunks: Vec<Vec<f64>> = (0..num_matrices.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(num_matrices);
            let mut out = Vec::with_capacity((hi - lo) * params.p);
            for k in lo..hi {
                out.extend(sample_eigenvalues(spectrum, params, k as u64, seed)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(Ensemble {
        p: params.p,
        eigenvalues: chunks.concat(),
    })
}

/// Density of Λ₁ χ²_n at x: (1/Λ₁) f_{χ²_n}(x/Λ₁). This is the exact
/// eigenvalue density for p = 1.
pub fn chisq_oracle(x: f64, n: usize, lambda1: f64) -> Result<f64> {
    if n == 0 || !(lambda1 > 0.0) || !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "chisq_oracle(x = {x}, n = {n}, lambda = {lambda1})"
        )));
    }
    let half = n as f64 / 2.0;
    if x == 0.0 {
        return match n {
            1 => Err(Error::Domain("chi-squared density with n = 1 diverges at 0".into())),
            2 => Ok(0.5 / lambda1),
            _ => Ok(0.0),
        };
    }
    let y = x / lambda1;
    let ln_f = (half - 1.0) * y.ln() - 0.5 * y - half * std::f64::consts::LN_2 - ln_gamma(half);
    Ok(ln_f.exp() / lambda1)
}
