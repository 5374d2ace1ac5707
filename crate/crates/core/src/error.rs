use thiserror::Error;

use crate::theory::KktResidual;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("run aborted at step {step}: non-finite {what}")]
    NonFiniteState { step: usize, what: &'static str },

    #[error("point lies outside the action set: {0}")]
    OutsideActionSet(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("index {index} out of range 1..={len}")]
    OutOfRange { index: usize, len: usize },

    #[error("hypothesis violated at step {tau}: {reason}")]
    HypothesisViolated { tau: usize, reason: String },

    #[error("solver did not converge after {iterations} iterations ({residuals})")]
    NotConverged {
        iterations: usize,
        residuals: KktResidual,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("corrupt report: {0}")]
    CorruptReport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::NonFiniteState { .. } => "non_finite_state",
            Error::OutsideActionSet(_) => "outside_action_set",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::InvalidGame(_) => "invalid_game",
            Error::OutOfRange { .. } => "out_of_range",
            Error::HypothesisViolated { .. } => "hypothesis_violated",
            Error::NotConverged { .. } => "not_converged",
            Error::Unsupported(_) => "unsupported",
            Error::CorruptReport(_) => "corrupt_report",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
