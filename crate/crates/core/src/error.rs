use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("field length mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("ellipticity violated at node {node}: xi^T A xi = {form:.6e} outside [{lower:.6e}, {upper:.6e}]")]
    Ellipticity {
        node: usize,
        form: f64,
        lower: f64,
        upper: f64,
    },
    #[error("matrix is not positive definite (pivot {pivot} = {value:.6e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("{method} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("grid has {n} nodes, above the dense cap of {cap}; use alpha in {{0, 1}} instead")]
    DenseCapExceeded { n: usize, cap: usize },
    #[error("non-finite state at t = {t} (dt = {dt})")]
    Divergence { t: f64, dt: f64 },
    #[error("ensemble member {member} failed: {source}")]
    MemberFailed { member: usize, source: Box<Error> },
    #[error("grid mismatch: {0:016x} vs {1:016x}")]
    GridMismatch(u64, u64),
    #[error("audit failed: {0}")]
    Audit(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, got })
    }
}
