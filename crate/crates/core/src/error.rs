use std::fmt;

use crate::head::ActivationKind;

/// Errors raised by the evidential core.
#[derive(Debug, thiserror::Error)]
pub enum EvError {
    #[error("{func}: argument {value} outside the domain")]
    Domain { func: &'static str, value: f64 },

    #[error("exponential evidence overflow at index {index} (logit {logit})")]
    Overflow { index: usize, logit: f64 },

    #[error("non-finite {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} has no evidence-form regularizer (activation is not invertible)")]
    UnsupportedActivation(ActivationKind),

    #[error("evidence-form regularizer is infinite at zero ground-truth evidence; use the logit form")]
    InfiniteRegularizer,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error at byte offset {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("training aborted at epoch {epoch}, sample {sample}: {source}")]
    Training {
        epoch: usize,
        sample: usize,
        #[source]
        source: Box<EvError>,
    },
}

impl EvError {
    pub(crate) fn invalid(msg: impl fmt::Display) -> Self {
        EvError::InvalidArgument(msg.to_string())
    }

    pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(EvError::DimensionMismatch { what, expected, got })
        }
    }

    /// True for floating-point failures (overflow) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            EvError::Overflow { .. } | EvError::NonFinite { .. } => true,
            EvError::Training { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = EvError> = std::result::Result<T, E>;
