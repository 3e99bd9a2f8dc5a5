use thiserror::Error;

/// Failure modes shared by every module of the crate.
///
/// The variant name doubles as a stable identifier: front ends print it
/// verbatim so scripts can match on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("NonPositiveMass: mass #{index} is {value}, every mass must be > 0")]
    NonPositiveMass { index: usize, value: f64 },
    #[error("TooFewBodies: got {got} bodies, need at least {min}")]
    TooFewBodies { got: usize, min: usize },
    #[error("WrongArity: expected {expected} bodies, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
    #[error("ConvergenceFailure: {0}")]
    ConvergenceFailure(String),
    #[error("SpectralDegeneracy: {0}")]
    SpectralDegeneracy(String),
    #[error("NotBoundaryPoint: {0}")]
    NotBoundaryPoint(String),
    #[error("BasisMismatch: max |A^T M A - I| = {deviation:e}")]
    BasisMismatch { deviation: f64 },
    #[error("Collision: bodies {i} and {j} are {distance:e} apart")]
    Collision { i: usize, j: usize, distance: f64 },
    #[error("StepTooSmall: finite-difference step {0:e} is below 1e-7")]
    StepTooSmall(f64),
    #[error("StepTooLarge: finite-difference step {0:e} is above 1e-3")]
    StepTooLarge(f64),
    #[error("IntegratorFailure: {0}")]
    IntegratorFailure(String),
    #[error("AmbiguousPair: {0}")]
    AmbiguousPair(String),
    #[error("BracketFailure: {0}")]
    BracketFailure(String),
    #[error("ContinuationFailure: {0}")]
    ContinuationFailure(String),
}

impl Error {
    /// The bare variant name, e.g. `"NonPositiveMass"`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonPositiveMass { .. } => "NonPositiveMass",
            Error::TooFewBodies { .. } => "TooFewBodies",
            Error::WrongArity { .. } => "WrongArity",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::ConvergenceFailure(_) => "ConvergenceFailure",
            Error::SpectralDegeneracy(_) => "SpectralDegeneracy",
            Error::NotBoundaryPoint(_) => "NotBoundaryPoint",
            Error::BasisMismatch { .. } => "BasisMismatch",
            Error::Collision { .. } => "Collision",
            Error::StepTooSmall(_) => "StepTooSmall",
            Error::StepTooLarge(_) => "StepTooLarge",
            Error::IntegratorFailure(_) => "IntegratorFailure",
            Error::AmbiguousPair(_) => "AmbiguousPair",
            Error::BracketFailure(_) => "BracketFailure",
            Error::ContinuationFailure(_) => "ContinuationFailure",
        }
    }

    /// True for errors caused by bad input rather than a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveMass { .. }
                | Error::TooFewBodies { .. }
                | Error::WrongArity { .. }
                | Error::InvalidParameter(_)
                | Error::StepTooSmall(_)
                | Error::StepTooLarge(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
