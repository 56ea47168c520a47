use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("eigenvalue {index} is not positive ({value})")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("spectrum is degenerate: relative gap {rel_gap:e} between entries {index} and {} is below 1e-10", index + 1)]
    DegenerateSpectrum { index: usize, rel_gap: f64 },

    #[error("spectrum has {got} values but p = {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    #[error("row {row} has zero sample variance")]
    ZeroVarianceRow { row: usize },

    #[error("non-finite input value at {0}")]
    NonFiniteInput(String),

    #[error("index {index} out of range for {len} values")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("order {order} out of range 0..={max}")]
    OrderOutOfRange { order: i64, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("epsilon extrapolation unstable: successive estimates {a:e} and {b:e}")]
    ExtrapolationUnstable { a: f64, b: f64 },

    #[error("backends disagree at x = {x}: cells {cells:e}, epsilon {epsilon:e}")]
    BackendDisagreement { x: f64, cells: f64, epsilon: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("the analytic density is only available for real (beta = 1) ensembles")]
    Beta2NotSupported,

    #[error("empty input")]
    EmptyInput,

    #[error("curve does not cover the mass: {0}")]
    InsufficientCoverage(String),

    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },

    #[error("grid must be strictly increasing (violated at index {0})")]
    UnsortedGrid(usize),

    #[error("density {value:e} at x = {x} is negative beyond quadrature noise (peak {peak:e})")]
    NegativeDensity { x: f64, value: f64, peak: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
