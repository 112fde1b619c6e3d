use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Validation errors map to CLI exit code 2, numerical failures to 3
/// (see [`Error::is_numerical`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sign condition violated: need r1 > 0 and r1^2 + r2 > 0 (got r1 = {r1}, r2 = {r2})")]
    SignConditionViolated { r1: f64, r2: f64 },

    #[error("process is not stationary: need r1 + r2 < 1, r2 - r1 < 1 and |r2| < 1 (got r1 = {r1}, r2 = {r2})")]
    NonStationary { r1: f64, r2: f64 },

    #[error("gaussian-stationary initial law requires gaussian innovations, got {0}")]
    ModeMismatch(String),

    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },

    #[error("grid of {points} points exceeds the cap of {cap}")]
    GridTooLarge { points: usize, cap: usize },

    #[error("threshold x = {x} lies below the truncated domain edge {lower}")]
    ThresholdBelowDomain { x: f64, lower: f64 },

    #[error("beta_y is undefined when r2 = 0")]
    BetaUndefined,

    #[error("non-finite operator entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("eigenvector matrix is defective or ill-conditioned (condition number {cond:.3e})")]
    DefectiveOrIllConditioned { cond: f64 },

    #[error("eigenvalue {index} is numerically zero ({modulus:.3e})")]
    EigenvalueNearZero { index: usize, modulus: f64 },

    #[error("index {index} out of range for spectrum of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("imaginary residue {residue:.3e} at n = {n} exceeds tolerance")]
    ImaginaryResidueTooLarge { n: usize, residue: f64 },

    #[error("leading eigenvalue is complex ({re} {im:+}i); decay law needs a real leading eigenvalue")]
    ComplexLeadingEigenvalue { re: f64, im: f64 },

    #[error("estimate threshold {estimate} does not match expansion threshold {expansion}")]
    MismatchedThreshold { expansion: f64, estimate: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteEntry { .. }
                | Error::EigenFailure(_)
                | Error::DefectiveOrIllConditioned { .. }
                | Error::EigenvalueNearZero { .. }
                | Error::ImaginaryResidueTooLarge { .. }
                | Error::ComplexLeadingEigenvalue { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
