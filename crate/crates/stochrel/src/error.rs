use thiserror::Error;

/// Errors produced by construction and decision routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state labels are not distinct: {0}")]
    DuplicateLabel(String),
    #[error("state index {index} out of range for space of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("state spaces do not match: {0}")]
    SpaceMismatch(String),
    #[error("label {0} has no numeric interpretation required by this relation kind")]
    NonNumericLabel(String),
    #[error("invalid relation parameter: {0}")]
    BadRelationParams(String),
    #[error("probability masses must be nonnegative and sum to one exactly (got sum {0})")]
    NotNormalized(String),
    #[error("negative value at state {0}; positive functions are required")]
    NegativeValue(String),
    #[error("kernel row {row} is not a probability distribution: {reason}")]
    NotStochastic { row: usize, reason: String },
    #[error("negative rate {rate} at state {state}")]
    NegativeRate { state: String, rate: String },
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("kernel pair does not preserve the relation at pair ({left}, {right})")]
    NotPreserving { left: String, right: String },
    #[error("relation hypothesis fails at step {step} for history pair ({left}, {right})")]
    RelationHypothesis {
        step: usize,
        left: String,
        right: String,
    },
    #[error("chain is reducible; no unique stationary distribution")]
    Reducible,
    #[error("parse error at byte {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("invalid population model: {0}")]
    BadModel(String),
    #[error("malformed input: {0}")]
    BadInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
