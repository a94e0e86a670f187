use thiserror::Error;

use crate::model::{Millis, Timestamp};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamp {t} is outside window [{start}, {end})")]
    OutOfRange {
        t: Timestamp,
        start: Timestamp,
        end: Timestamp,
    },

    #[error("FWindows can only move forward in time (sync {from} -> {to})")]
    BackwardSlide { from: Timestamp, to: Timestamp },

    #[error("{what}: {value} is not aligned to the ({offset},{period}) grid")]
    Misaligned {
        what: &'static str,
        value: Timestamp,
        offset: Timestamp,
        period: Millis,
    },

    #[error("edge {edge}: dimension {dimension} is not a multiple of period {period}")]
    NonDivisibleDimension {
        edge: String,
        dimension: Millis,
        period: Millis,
    },

    #[error("plan error at {path}: {message}")]
    Plan { path: String, message: String },

    #[error(
        "locality tracing diverged at {node}: dimension {dimension} exceeds cap {cap} (periods involved: {periods})"
    )]
    DimensionOverflow {
        node: String,
        dimension: u128,
        cap: Millis,
        periods: String,
    },

    #[error("memory plan needs {required} bytes, budget is {budget}")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("{path}:{line}: {message}")]
    Ingest { path: String, line: u64, message: String },

    #[error("sink received event at {sync} after {last}")]
    OutOfOrder { sync: Timestamp, last: Timestamp },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn plan(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Plan {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    /// True for errors caused by malformed input data rather than by the query or the engine.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Ingest { .. } | Error::Io(_) | Error::Csv(_) | Error::LengthMismatch { .. }
        )
    }

    /// True for engine bugs: the contract between planner and runtime was broken.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_) | Error::OutOfOrder { .. })
    }
}
