use std::path::PathBuf;

use thiserror::Error;

use crate::engine::SimTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot schedule at {at} (clock is already at {now})")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config {path}: {msg}")]
    Config { path: PathBuf, msg: String },

    #[error("unknown channel model `{0}` (expected simple-A, simple-B or scm)")]
    UnknownModel(String),

    #[error(
        "large-scale state drawn at {drawn_at:.3} s is stale at {now:.3} s (epoch {epoch:.3} s)"
    )]
    StaleLargeScale { drawn_at: f64, now: f64, epoch: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no channel sample for link bs{bs} -> ue{ue}")]
    MissingChannelSample { bs: usize, ue: usize },

    #[error("ack {ack} beyond highest sent byte {snd_nxt}")]
    AckBeyondSent { ack: u64, snd_nxt: u64 },

    #[error("cannot pair runs: {0}")]
    Pairing(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
