//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A domain value failed a structural invariant.
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    /// An index was outside its documented range.
    #[error("index out of range: {what} = {got}, valid range {range}")]
    IndexOutOfRange {
        what: &'static str,
        got: usize,
        range: String,
    },

    /// Assignment dimensions do not match the payload/spec they are checked against.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The mass generator could not fill the truncation window.
    #[error("generation failed for size class {size}: {draws} draws yielded only {accepted} accepted samples (need {needed})")]
    Generation {
        size: u8,
        draws: usize,
        accepted: usize,
        needed: usize,
    },

    /// A document failed schema validation; `path` locates the offending field.
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    /// Exhaustive enumeration refused: the search space exceeds the guard.
    #[error("search space too large for exhaustive enumeration: ~10^{log10_size:.1} assignments exceeds the 10^8 guard")]
    SearchSpaceTooLarge { log10_size: f64 },

    /// Not enough data points for a scaling fit.
    #[error("scaling fit needs at least {needed} records with time-to-quality at r = {r}, got {got}")]
    InsufficientFitData { r: f64, needed: usize, got: usize },

    /// A model export was refused.
    #[error("export rejected: {0}")]
    Export(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
