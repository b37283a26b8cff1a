use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("simulation diverged at t = {t} s (non-finite state)")]
    NonFinite { t: f64 },

    #[error("signal too short for filtering: {len} samples, need more than {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("degenerate covariance: points have no spread")]
    DegenerateCovariance,

    #[error("not enough points: {got}, need at least {need}")]
    NotEnoughPoints { got: usize, need: usize },

    #[error("log schema violation in {path} line {line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },

    #[error("schedule violation: {0}")]
    Schedule(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
