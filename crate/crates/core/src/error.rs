use thiserror::Error;

use crate::forecaster::Model;

/// Errors produced by the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A series value was NaN or infinite.
    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },

    /// A segment length outside `1..=len`.
    #[error("invalid period {period} for a series of length {len}")]
    InvalidPeriod { period: usize, len: usize },

    /// An empty or malformed candidate-period interval.
    #[error("invalid period range [{min}, {max}]")]
    InvalidRange { min: usize, max: usize },

    /// Not enough samples for the requested operation.
    #[error("insufficient data: {what} needs {needed} samples, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    /// Two series that must line up do not.
    #[error("series misaligned: lengths {left} and {right}, start indices {left_start} and {right_start}")]
    Alignment {
        left: usize,
        right: usize,
        left_start: i64,
        right_start: i64,
    },

    /// The least-squares system for this degree is numerically singular.
    #[error("singular least-squares system for degree {degree}")]
    SingularFit { degree: usize },

    /// A fractional blend was evaluated where its bracketing fits disagree in sign or vanish.
    #[error("fractional blend outside its sign domain at sample {index}")]
    SignDomain { index: i64 },

    /// Malformed arguments.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// No candidate configuration of an iteration was feasible.
    #[error("iteration {iteration} failed: no feasible candidate")]
    IterationFailed { iteration: usize },

    /// Guaranteed mode could not halve the residual; carries the iterations accepted so far.
    #[error("cannot reduce the residual by more than 50% at iteration {iteration}")]
    GuaranteeUnreachable { iteration: usize, partial: Box<Model> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
