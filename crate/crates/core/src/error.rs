use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error in {func}: {reason}")]
    Domain { func: &'static str, reason: String },

    #[error("invalid Beta parameters alpha={alpha}, beta={beta}")]
    InvalidParams { alpha: f64, beta: f64 },

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("Beta({alpha}, {beta}) has no interior mode")]
    NoInteriorMode { alpha: f64, beta: f64 },

    #[error("validation failed at `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("{0} requires a nonempty input")]
    Empty(&'static str),

    #[error("record `{id}` has no {which} fit")]
    MissingFit { id: String, which: &'static str },

    #[error("record `{id}` does not carry raw sample responses")]
    MissingSamples { id: String },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("record i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(func: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            func,
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
