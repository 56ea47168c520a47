//! Domain types for the ensemble: the empirical spectrum, the ensemble
//! dimensions and raw time series, plus estimation of the empirical
//! correlation spectrum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{hermitian_eigenvalues, symmetric_eigenvalues};

/// Minimum relative gap between consecutive eigenvalues.
pub const MIN_REL_GAP: f64 = 1e-10;

/// Eigenvalues of a correlation matrix at or below this are treated as zero.
pub const NEAR_ZERO_EIGENVALUE: f64 = 1e-12;

/// Dyson index of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Beta {
    Real,
    Complex,
}

impl Beta {
    pub fn index(self) -> u8 {
        match self {
            Beta::Real => 1,
            Beta::Complex => 2,
        }
    }
}

impl TryFrom<u8> for Beta {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Beta::Real),
            2 => Ok(Beta::Complex),
            other => Err(Error::Config(format!("beta must be 1 or 2, got {other}"))),
        }
    }
}

impl From<Beta> for u8 {
    fn from(b: Beta) -> u8 {
        b.index()
    }
}

/// What the validated inputs will be used for. The analytic density needs
/// every derivative order n, n-1, n-2 to be at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Usage {
    Analytic,
    Sampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: usize,
    pub n: usize,
    pub beta: Beta,
}

impl ModelParams {
    pub fn new(p: usize, n: usize, beta: Beta) -> Self {
        ModelParams { p, n, beta }
    }

    pub fn real(p: usize, n: usize) -> Self {
        Self::new(p, n, Beta::Real)
    }

    pub fn check(&self, usage: Usage) -> Result<()> {
        if self.p == 0 {
            return Err(Error::BadDimensions("p must be at least 1".into()));
        }
        if self.n < self.p {
            return Err(Error::BadDimensions(format!(
                "n = {} is smaller than p = {}",
                self.n, self.p
            )));
        }
        if usage == Usage::Analytic {
            if self.beta == Beta::Complex {
                return Err(Error::Beta2NotSupported);
            }
            if self.n < 3 {
                return Err(Error::BadDimensions(format!(
                    "the analytic density needs n >= 3, got n = {}",
                    self.n
                )));
            }
        }
        Ok(())
    }
}

/// Eigenvalues of the empirical correlation matrix, strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteInput(format!("eigenvalue {index}")));
            }
            if value <= 0.0 {
                return Err(Error::NonPositiveEigenvalue { index, value });
            }
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (index, w) in sorted.windows(2).enumerate() {
            let rel_gap = (w[0] - w[1]) / w[0];
            if rel_gap < MIN_REL_GAP {
                return Err(Error::DegenerateSpectrum { index, rel_gap });
            }
        }
        Ok(Spectrum { values: sorted })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// Multiplies every eigenvalue by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let v: Vec<f64> = self.values.iter().map(|l| l * factor).collect();
        Spectrum::new(&v)
    }
}

impl<'de> Deserialize<'de> for Spectrum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Spectrum::new(&v).map_err(serde::de::Error::custom)
    }
}

/// Checks raw eigenvalues against the ensemble dimensions.
pub fn validate(values: &[f64], params: &ModelParams, usage: Usage) -> Result<(Spectrum, ModelParams)> {
    if values.len() != params.p {
        return Err(Error::DimensionMismatch {
            expected: params.p,
            got: values.len(),
        });
    }
    params.check(usage)?;
    Ok((Spectrum::new(values)?, *params))
}

/// Pushes apart values whose relative gap is below `rel`, walking down from
/// the largest. Returns the adjusted values in descending order.
pub fn spread_degenerate(values: &[f64], rel: f64) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for k in 1..sorted.len() {
        let ceiling = sorted[k - 1] * (1.0 - rel);
        if sorted[k] > ceiling {
            sorted[k] = ceiling;
        }
    }
    sorted
}

/// p x n matrix of time series, one row per series.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeSeriesMatrix {
    Real(Vec<Vec<f64>>),
    Complex(Vec<Vec<Complex64>>),
}

impl TimeSeriesMatrix {
    pub fn real(rows: Vec<Vec<f64>>) -> Result<Self> {
        check_shape(rows.iter().map(|r| r.len()))?;
        for (j, row) in rows.iter().enumerate() {
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput(format!("row {j}, column {k}")));
            }
        }
        Ok(TimeSeriesMatrix::Real(rows))
    }

    pub fn complex(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        check_shape(rows.iter().map(|r| r.len()))?;
        for (j, row) in rows.iter().enumerate() {
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput(format!("row {j}, column {k}")));
            }
        }
        Ok(TimeSeriesMatrix::Complex(rows))
    }

    pub fn p(&self) -> usize {
        match self {
            TimeSeriesMatrix::Real(r) => r.len(),
            TimeSeriesMatrix::Complex(r) => r.len(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            TimeSeriesMatrix::Real(r) => r[0].len(),
            TimeSeriesMatrix::Complex(r) => r[0].len(),
        }
    }

    /// Parses comma-separated rows; blank lines and lines starting with '#'
    /// are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno + 1,
                        msg: format!("'{}': {e}", tok.trim()),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("ragged row: {} values, expected {w}", row.len()),
                    })
                }
                _ => {}
            }
            rows.push(row);
        }
        TimeSeriesMatrix::real(rows)
    }
}

fn check_shape(lens: impl Iterator<Item = usize>) -> Result<()> {
    let lens: Vec<usize> = lens.collect();
    if lens.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(j) = lens.iter().position(|&l| l != lens[0]) {
        return Err(Error::BadDimensions(format!(
            "row {j} has {} entries, row 0 has {}",
            lens[j], lens[0]
        )));
    }
    if lens[0] < 2 {
        return Err(Error::BadDimensions("time series need at least 2 samples".into()));
    }
    Ok(())
}

/// Eigenvalues of an estimated correlation matrix, descending. Entries at or
/// below [`NEAR_ZERO_EIGENVALUE`] are listed in `near_zero`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpectrum {
    pub eigenvalues: Vec<f64>,
    pub near_zero: Vec<usize>,
}

impl CorrelationSpectrum {
    /// Converts to a [`Spectrum`], failing if C is numerically singular.
    pub fn to_spectrum(&self) -> Result<Spectrum> {
        if let Some(&index) = self.near_zero.first() {
            return Err(Error::NonPositiveEigenvalue {
                index,
                value: self.eigenvalues[index],
            });
        }
        Spectrum::new(&self.eigenvalues)
    }
}

/// Normalises each series to zero mean and unit variance, forms
/// C = M M† / n and returns its eigenvalues.
pub fn correlation_spectrum(ts: &TimeSeriesMatrix) -> Result<CorrelationSpectrum> {
    let p = ts.p();
    let n = ts.n();
    let nf = n as f64;
    let eigenvalues = match ts {
        TimeSeriesMatrix::Real(rows) => {
            let z = rows
                .iter()
                .enumerate()
                .map(|(j, row)| {
                    let mean = row.iter().sum::<f64>() / nf;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
                    if !(var > f64::MIN_POSITIVE) {
                        return Err(Error::ZeroVarianceRow { row: j });
                    }
                    let sd = var.sqrt();
                    Ok(row.iter().map(|v| (v - mean) / sd).collect::<Vec<f64>>())
                })
                .collect::<Result<Vec<_>>>()?;
            let mut c = vec![0.0; p * p];
            for a in 0..p {
                for b in a..p {
                    let s = z[a].iter().zip(&z[b]).map(|(u, v)| u * v).sum::<f64>() / nf;
                    c[a * p + b] = s;
                    c[b * p + a] = s;
                }
            }
            symmetric_eigenvalues(&c, p)?
        }
        TimeSeriesMatrix::Complex(rows) => {
            let z = rows
                .iter()
                .enumerate()
                .map(|(j, row)| {
                    let mean = row.iter().sum::<Complex64>() / nf;
                    let var = row.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / nf;
                    if !(var > f64::MIN_POSITIVE) {
                        return Err(Error::ZeroVarianceRow { row: j });
                    }
                    let sd = var.sqrt();
                    Ok(row.iter().map(|v| (v - mean) / sd).collect::<Vec<Complex64>>())
                })
                .collect::<Result<Vec<_>>>()?;
            let mut c = vec![Complex64::new(0.0, 0.0); p * p];
            for a in 0..p {
                for b in a..p {
                    let s = z[a].iter().zip(&z[b]).map(|(u, v)| u * v.conj()).sum::<Complex64>() / nf;
                    c[a * p + b] = s;
                    c[b * p + a] = s.conj();
                }
            }
            hermitian_eigenvalues(&c, p)?
        }
    };
    let near_zero = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= NEAR_ZERO_EIGENVALUE)
        .map(|(i, _)| i)
        .collect();
    Ok(CorrelationSpectrum { eigenvalues, near_zero })
}

/// Reads a spectrum from a JSON array, or from an object with a
/// `spectrum` array field.
pub fn parse_spectrum_json(text: &str) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Form {
        Bare(Vec<f64>),
        Wrapped { spectrum: Vec<f64> },
    }
    Ok(match serde_json::from_str::<Form>(text)? {
        Form::Bare(v) => v,
        Form::Wrapped { spectrum } => spectrum,
    })
}
