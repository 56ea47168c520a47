//! Shared fixtures for the benchmarks.

use wishart_core::{ModelParams, Spectrum};

/// Spectrum of the five-eigenvalue reference case, n = 200.
pub fn five_eigenvalues() -> (Spectrum, ModelParams) {
    (
        Spectrum::new(&[1.44, 0.64, 0.49, 0.25, 0.16]).expect("valid spectrum"),
        ModelParams::real(5, 200),
    )
}

/// Spectrum of the ten-eigenvalue reference case, n = 200.
pub fn ten_eigenvalues() -> (Spectrum, ModelParams) {
    (
        Spectrum::new(&[1.0, 0.81, 0.7225, 0.64, 0.45, 0.36, 0.25, 0.2025, 0.1225, 0.03]).expect("valid spectrum"),
        ModelParams::real(10, 200),
    )
}

/// Small three-eigenvalue case.
pub fn three_eigenvalues() -> (Spectrum, ModelParams) {
    (
        Spectrum::new(&[1.2, 0.7, 0.3]).expect("valid spectrum"),
        ModelParams::real(3, 8),
    )
}
