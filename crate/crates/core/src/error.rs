use std::path::PathBuf;

use thiserror::Error;

use crate::ep::EpPoint;

/// Errors raised by the model, the EP locator, the propagator and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("resonance condition violated: |w1 - w2 - w3| = {mismatch:e} > {allowed:e}")]
    Resonance { mismatch: f64, allowed: f64 },

    #[error("no exceptional points: both decay rates vanish (Hermitian limit)")]
    HermitianLimit,

    #[error(
        "EP refinement did not converge (|delta| = {residual:e} after {iterations} iterations)"
    )]
    NotConverged {
        best: Box<EpPoint>,
        residual: f64,
        iterations: usize,
    },

    #[error("response probe: eigenvalue gap stays below the noise floor along this direction")]
    DegenerateDirection,

    #[error("frame is at an exceptional point; adiabatic projection is undefined")]
    AtExceptionalPoint,

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite state at t = {t:e}")]
    NonFinite { t: f64 },

    #[error("time {t:e} outside the loop interval [0, {period:e}]")]
    TimeOutOfRange { t: f64, period: f64 },

    #[error("path passes through an exceptional point near t = {t:e} (|delta| = {delta_abs:e})")]
    PathThroughEp { t: f64, delta_abs: f64 },

    #[error("ambiguous eigenvalue matching near t = {t:e} after maximum bisection depth")]
    AmbiguousBranch { t: f64 },

    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialize(String),

    #[error("{failed} of {total} runs failed (first: {first})")]
    PartialFailure {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl Error {
    pub(crate) fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::Resonance { .. } => "resonance",
            Error::HermitianLimit => "hermitian_limit",
            Error::NotConverged { .. } => "not_converged",
            Error::DegenerateDirection => "degenerate_direction",
            Error::AtExceptionalPoint => "at_exceptional_point",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::NonFinite { .. } => "non_finite",
            Error::TimeOutOfRange { .. } => "time_out_of_range",
            Error::PathThroughEp { .. } => "path_through_ep",
            Error::AmbiguousBranch { .. } => "ambiguous_branch",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Serialize(_) => "serialize",
            Error::PartialFailure { .. } => "partial_failure",
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParams(_) | Error::Resonance { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
