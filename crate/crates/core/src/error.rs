use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: asymmetry {asymmetry:e} exceeds {tol:e}")]
    NotHermitian { asymmetry: f64, tol: f64 },
    #[error("matrix is indefinite: eigenvalue {eigenvalue:e} below -{tol:e}")]
    IndefiniteInput { eigenvalue: f64, tol: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("negative power budget {0}")]
    NegativeBudget(f64),
    #[error("every mode has zero weight")]
    AllModesDisabled,
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("target distortion {target} outside (0, {max}]")]
    DistortionOutOfRange { target: f64, max: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("prior covariance is singular")]
    SingularPrior,
    #[error("waveform needs {active} rows but only {rows} are available")]
    InsufficientRows { rows: usize, active: usize },
    #[error("channel map annihilates the prior (F Σ F^H = 0)")]
    ZeroChannel,
    #[error("jacobian evaluation produced non-finite entries")]
    JacobianFailure,
    #[error("spectrum has zero total energy")]
    ZeroEnergy,
    #[error("{0} must be strictly positive")]
    NonPositiveInput(&'static str),
    #[error("path delay {delay} outside [0, {n})")]
    DelayOutOfRange { delay: usize, n: usize },
    #[error("path delays must be distinct (delay {0} repeated)")]
    DuplicateDelay(usize),
    #[error("innovation covariance is numerically singular")]
    SingularGram,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
