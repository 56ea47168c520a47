//! Cyclic Jacobi diagonalisation for the small dense matrices sampled here.

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues of a row-major `dim x dim` real symmetric matrix, descending.
pub fn symmetric_eigenvalues(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    if a.len() != dim * dim {
        return Err(Error::BadDimensions(format!(
            "expected {} entries for a {dim}x{dim} matrix, got {}",
            dim * dim,
            a.len()
        )));
    }
    let frob = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    for i in 0..dim {
        for j in 0..i {
            let diff = (a[i * dim + j] - a[j * dim + i]).abs();
            if diff > SYMMETRY_TOL * frob.max(f64::MIN_POSITIVE) {
                return Err(Error::NotSymmetric { i, j, diff });
            }
        }
    }
    let mut m = a.to_vec();
    jacobi_in_place(&mut m, dim, frob)?;
    let mut eig: Vec<f64> = (0..dim).map(|i| m[i * dim + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Eigenvalues of a row-major Hermitian matrix, descending.
///
/// Uses the real embedding [[Re, -Im], [Im, Re]], whose spectrum is that of
/// the Hermitian matrix with every eigenvalue doubled in multiplicity.
pub fn hermitian_eigenvalues(a: &[Complex64], dim: usize) -> Result<Vec<f64>> {
    if a.len() != dim * dim {
        return Err(Error::BadDimensions(format!(
            "expected {} entries for a {dim}x{dim} matrix, got {}",
            dim * dim,
            a.len()
        )));
    }
    let big = 2 * dim;
    let mut e = vec![0.0; big * big];
    for i in 0..dim {
        for j in 0..dim {
            let z = a[i * dim + j];
            e[i * big + j] = z.re;
            e[(i + dim) * big + j + dim] = z.re;
            e[i * big + j + dim] = -z.im;
            e[(i + dim) * big + j] = z.im;
        }
    }
    let doubled = symmetric_eigenvalues(&e, big)?;
    Ok(doubled.into_iter().step_by(2).collect())
}

fn off_diagonal_norm(m: &[f64], dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            if i != j {
                s += m[i * dim + j] * m[i * dim + j];
            }
        }
    }
    s.sqrt()
}

fn jacobi_in_place(m: &mut [f64], dim: usize, frob: f64) -> Result<()> {
    let target = 1e-14 * frob;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(m, dim) <= target {
            return Ok(());
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = m[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..dim {
                    let mkp = m[k * dim + p];
                    let mkq = m[k * dim + q];
                    m[k * dim + p] = c * mkp - s * mkq;
                    m[k * dim + q] = s * mkp + c * mkq;
                }
                for k in 0..dim {
                    let mpk = m[p * dim + k];
                    let mqk = m[q * dim + k];
                    m[p * dim + k] = c * mpk - s * mqk;
                    m[q * dim + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let off = off_diagonal_norm(m, dim);
    if off <= 1e-12 * frob {
        Ok(())
    } else {
        Err(Error::NoConvergence(format!(
            "Jacobi: off-diagonal norm {off:e} after {MAX_SWEEPS} sweeps"
        )))
    }
}
