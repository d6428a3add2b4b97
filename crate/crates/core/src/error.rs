use std::collections::BTreeSet;

use crate::labels::LogicalIndex;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("logical index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: LogicalIndex, bound: usize },

    #[error("logical qubit {0} is not encoded in this code")]
    NotEncoded(LogicalIndex),

    #[error("unknown qubit id {0}")]
    UnknownQubit(usize),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{what} is {value}, above the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("residual error has a non-zero syndrome")]
    NonZeroSyndrome,

    #[error("labels do not cancel: symmetric difference is {0:?}")]
    ParityRelation(BTreeSet<LogicalIndex>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid code: {0}")]
    InvalidCode(String),

    #[error("layout: {0}")]
    Layout(String),

    #[error("deformation: {0}")]
    Deformation(String),

    #[error("step {step} ({description}) leaves distance {distance}, below the required {floor}")]
    DistanceViolation {
        step: usize,
        description: String,
        distance: usize,
        floor: usize,
    },

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("verification failed: {0}")]
    Verification(String),
}
