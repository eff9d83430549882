use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    #[error("step {step} out of range 1..={max}")]
    StepOutOfRange { step: usize, max: usize },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("root solver did not converge after {steps} steps (pS={ps}, lambda={lambda})")]
    RootNotConverged { steps: usize, ps: f64, lambda: f64 },

    #[error("step {step} collapsed: every angle is zero after {retries} multiplier halvings")]
    CollapsedStep { step: usize, retries: usize },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
