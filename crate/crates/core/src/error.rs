use alloc::string::String;
use thiserror::Error;

/// Errors raised by the reconstruction and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("model probability vanished at data row {row} while the observed frequency is {frequency}")]
    ZeroModelProbability { row: usize, frequency: f64 },

    #[error("time step {dt} ps exceeds the limit of {limit} ps")]
    StepSize { dt: f64, limit: f64 },

    #[error("per-step jump probability {probability} exceeds {limit}")]
    JumpProbability { probability: f64, limit: f64 },

    #[error("Fock truncation overflow: top-level population {population:e} at t = {time} ps")]
    TruncationOverflow { population: f64, time: f64 },

    #[error("scattered-photon integral not converged: remaining tail {tail:e}")]
    UnconvergedTail { tail: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of a numerical procedure on otherwise valid input
    /// (as opposed to rejected parameters).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroModelProbability { .. }
                | Error::JumpProbability { .. }
                | Error::TruncationOverflow { .. }
                | Error::UnconvergedTail { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;

/// Rejects NaN and values outside `[lo, hi]`.
pub(crate) fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::Domain { what, value })
    }
}

pub(crate) fn check_non_negative(what: &'static str, value: f64) -> Result<f64> {
    check_range(what, value, 0.0, f64::INFINITY)
}
