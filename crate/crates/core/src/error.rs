use thiserror::Error;

/// Broad classes used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: parameters, degrees, schemas.
    Config,
    /// A structural condition on the kernel or density fails (A4, A6, B3).
    Condition,
    /// A numerical or consistency failure at run time.
    Numeric,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kernel degree must be at least 2, got {0}")]
    Degree(usize),

    #[error("expected {expected} central angles, got {got}")]
    AngleCount { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("custom kernel is not rotation/permutation invariant: {0}")]
    NotInvariant(String),

    #[error("generator is not symmetric, g(x) != g(2pi - x) at x = {x}")]
    AsymmetricGenerator { x: f64 },

    #[error("operation requires a {expected} kernel")]
    Family { expected: &'static str },

    #[error("{0} is outside the differentiable domain of the generator")]
    Domain(String),

    #[error(
        "maximum lies on the simplex boundary (gap {gap:.3e} < 1e-6): some points coincide, the limit theorem does not apply"
    )]
    BoundaryMaximum { gap: f64, maximizer: Vec<f64>, value: f64 },

    #[error("kernel is unbounded above (maximum value {0})")]
    Unbounded(f64),

    #[error("degenerate Hessian: {0}")]
    DegenerateHessian(String),

    #[error("second derivative g''(2pi/m) = {g2} has the wrong sign for {mode}")]
    ModeMismatch { g2: f64, mode: &'static str },

    #[error("density condition B3 fails: every maximizer has a vanishing product integral")]
    B3Violation,

    #[error("invalid density: {0}")]
    Density(String),

    #[error("rescaled statistic {value} is negative beyond slack; the extremal value is inconsistent")]
    Consistency { value: f64 },

    #[error("number of subsets C({n}, {m}) overflows the enumeration counter")]
    SubsetOverflow { n: usize, m: usize },

    #[error("sample size n = {n} is smaller than the kernel degree m = {m}")]
    SampleSize { n: usize, m: usize },

    #[error("tau is undefined: the estimate of p is zero")]
    UndefinedTau,

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::BoundaryMaximum { .. }
            | Error::Unbounded(_)
            | Error::DegenerateHessian(_)
            | Error::B3Violation
            | Error::ModeMismatch { .. } => ErrorClass::Condition,
            Error::Consistency { .. } | Error::UndefinedTau | Error::Domain(_) => {
                ErrorClass::Numeric
            }
            _ => ErrorClass::Config,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Degree(_) => "Degree",
            Error::AngleCount { .. } => "AngleCount",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NotInvariant(_) => "NotInvariant",
            Error::AsymmetricGenerator { .. } => "AsymmetricGenerator",
            Error::Family { .. } => "Family",
            Error::Domain(_) => "Domain",
            Error::BoundaryMaximum { .. } => "BoundaryMaximum",
            Error::Unbounded(_) => "Unbounded",
            Error::DegenerateHessian(_) => "DegenerateHessian",
            Error::ModeMismatch { .. } => "ModeMismatch",
            Error::B3Violation => "B3Violation",
            Error::Density(_) => "Density",
            Error::Consistency { .. } => "Consistency",
            Error::SubsetOverflow { .. } => "SubsetOverflow",
            Error::SampleSize { .. } => "SampleSize",
            Error::UndefinedTau => "UndefinedTau",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
