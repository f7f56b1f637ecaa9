use thiserror::Error;

/// Errors raised by fitting, subsampling and variance estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("information matrix is singular or not positive definite")]
    SingularInformation,

    #[error("estimated variance matrix is singular")]
    SingularVariance,

    #[error("pilot estimation failed: {0}")]
    PilotFailure(String),

    #[error("pilot normalizer is zero; every pilot row has a vanishing sampling statistic")]
    DegeneratePilot,

    #[error("row {row}: conditional moment kappa0 = {kappa0:e} underflows (pilot and model disagree)")]
    DegenerateRow { row: usize, kappa0: f64 },

    #[error("subsample is empty")]
    EmptySubsample,

    #[error("row {row} was selected with zero inclusion probability")]
    ZeroProbabilitySelected { row: usize },

    #[error("{0}")]
    Data(String),
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::SingularInformation => "singular_information",
            Error::SingularVariance => "singular_variance",
            Error::PilotFailure(_) => "pilot_failure",
            Error::DegeneratePilot => "degenerate_pilot",
            Error::DegenerateRow { .. } => "degenerate_row",
            Error::EmptySubsample => "empty_subsample",
            Error::ZeroProbabilitySelected { .. } => "zero_probability_selected",
            Error::Data(_) => "data",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
