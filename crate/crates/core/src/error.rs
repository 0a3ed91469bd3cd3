use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("matrix has {violations} positive columns, more than s = {s}")]
    NotInStepSet { violations: usize, s: usize },

    #[error("subset enumeration needs {needed} candidates, cap is {cap}")]
    EnumerationCap { needed: u128, cap: u128 },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("nonnegative least squares did not converge within {0} iterations")]
    NnlsNotConverged(usize),

    #[error("constraint gradients are rank deficient (pivot {pivot:e} below {threshold:e})")]
    RankDeficient { pivot: f64, threshold: f64 },

    #[error("infeasible point: {0}")]
    Infeasible(String),

    #[error("no grid point satisfies the step constraint")]
    EmptyFeasibleGrid,

    #[error("no Monte-Carlo trial produced a feasible sample")]
    NoQualifyingTrials,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
