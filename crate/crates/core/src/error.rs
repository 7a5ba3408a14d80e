use thiserror::Error;

use crate::eval::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid instance at {path}: {reason}")]
    InvalidInstance { path: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("masked action {action}: {reason}")]
    MaskedAction { action: String, reason: String },

    #[error("no eligible action")]
    EmptyMask,

    #[error("guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("schedule has {} violation(s): {}", .0.len(), summarize(.0))]
    InvalidSchedule(Vec<Violation>),

    #[error("incompatible: {0}")]
    Mismatch(String),

    #[error("unknown article '{0}'")]
    UnknownArticle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(v: &[Violation]) -> String {
    v.iter().take(3).map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInstance { path: path.into(), reason: reason.into() }
    }
}
