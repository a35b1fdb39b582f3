use std::path::PathBuf;

use thiserror::Error;

use crate::series::ChannelKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("duplicate channel kind {0} in manifest")]
    DuplicateChannel(ChannelKind),

    #[error("sampling rate must be positive, got {0}")]
    InvalidRate(f64),

    #[error("{path}: timestamps not strictly increasing at line {line}")]
    NonMonotonicTime { path: PathBuf, line: usize },

    #[error("{path}: implied rate {implied:.4} Hz does not match declared {declared} Hz")]
    RateMismatch {
        path: PathBuf,
        declared: f64,
        implied: f64,
    },

    #[error("{path}: non-finite value at line {line}")]
    NonFinite { path: PathBuf, line: usize },

    #[error("expected a {expected} channel, got {actual}")]
    WrongChannel {
        expected: ChannelKind,
        actual: ChannelKind,
    },

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("invalid window [{start}, {end})")]
    InvalidWindow { start: f64, end: f64 },

    #[error("window [{start}, {end}) does not intersect the data")]
    EmptyIntersection { start: f64, end: f64 },

    #[error("input too short: need at least {needed_s} s, got {actual_s} s")]
    TooShort { needed_s: f64, actual_s: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid session markers: {0}")]
    InvalidMarkers(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("skin conductance must be nonnegative (found {0} uS)")]
    NegativeConductance(f64),

    #[error("deconvolution did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("session log does not match plan: {0}")]
    PlanMismatch(String),

    #[error("invalid stimulus plan: {0}")]
    InvalidPlan(String),

    #[error("malformed performance records: {0}")]
    MalformedRecords(String),

    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for errors caused by malformed or inconsistent inputs, as opposed
    /// to failures while processing valid inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::DuplicateChannel(_)
                | Error::InvalidRate(_)
                | Error::NonMonotonicTime { .. }
                | Error::RateMismatch { .. }
                | Error::NonFinite { .. }
                | Error::InvalidSeries(_)
                | Error::InvalidMarkers(_)
                | Error::InvalidConfig(_)
                | Error::InvalidPlan(_)
                | Error::PlanMismatch(_)
                | Error::MalformedRecords(_)
                | Error::InvalidSpec(_)
        )
    }
}
