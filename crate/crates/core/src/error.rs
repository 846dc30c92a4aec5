use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("scale transform at index {index} has |a| = {value:e} below the invertibility floor")]
    NonInvertibleScale { index: usize, value: f64 },

    #[error("scale parameter {0:e} is too close to zero")]
    ZeroScale(f64),

    #[error("polynomial has no nonzero coefficients")]
    ZeroPolynomial,

    #[error("normal matrix of the spectrum least-squares problem is singular (pivot {pivot:e})")]
    SingularNormalMatrix { pivot: f64 },

    #[error("spectrum rule `original` requires caller-supplied eigenvalues")]
    MissingSpectrum,

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid record: {0}")]
    Validation(String),

    #[error("index {index} out of range for dimension {n} (line {line})")]
    IndexOutOfRange { index: usize, n: usize, line: usize },

    #[error("problem of size {n} exceeds the brute-force limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn dims_mismatch(expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
