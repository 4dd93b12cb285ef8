// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid term dictionary: {0}")]
    Dictionary(String),

    #[error("pattern {pattern:?} is shared by term {first} and term {second}")]
    DuplicatePattern {
        pattern: Vec<u32>,
        first: u32,
        second: u32,
    },

    #[error("corpus integrity: {0}")]
    Integrity(String),

    #[error("corpus has no document offsets")]
    MissingDocOffsets,

    #[error("invalid checkpoint schedule: {0}")]
    Schedule(String),

    #[error("infeasible synthetic corpus: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite model output at coordinate {coordinate}: {detail}")]
    NonFinite { coordinate: usize, detail: String },

    #[error("rank {rank} out of range 1..={max}")]
    Rank { rank: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unresolved term ids: {0:?}")]
    UnresolvedTerms(Vec<String>),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },

    #[error("run directory is locked by {0}")]
    Locked(PathBuf),

    #[error("incomplete run, missing stages: {0:?}")]
    IncompleteRun(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}
