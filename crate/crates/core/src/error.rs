use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty instruction")]
    EmptyInstruction,
    #[error("unbalanced brackets or quotes in `{0}`")]
    UnbalancedBrackets(String),
    #[error("invalid architecture tag `{0}` (expected [a-z0-9_]+)")]
    InvalidArchitecture(String),

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("pair `{id}`: both blocks are `{arch}`")]
    ArchMismatch { id: String, arch: String },
    #[error("pair `{id}`: block has no instructions")]
    EmptyBlock { id: String },
    #[error("no token survives min_count = {min_count}")]
    EmptyVocabulary { min_count: u64 },
    #[error("no vocabulary entries for architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("empty context")]
    EmptyContext,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model and configuration disagree: {0}")]
    ConfigMismatch(String),
    #[error("incompatible model file version {found} (expected {expected})")]
    IncompatibleVersion { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("no {0} scores to evaluate")]
    EmptySide(&'static str),
    #[error("every token of the block is out of vocabulary")]
    AllTokensUnknown,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by input data rather than by the caller's arguments.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidConfig(_) | Error::UnknownToken(_))
    }
}
