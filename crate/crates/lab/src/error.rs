use std::io;
use std::path::PathBuf;

use sseleak_core::attacks::AttackError;
use sseleak_core::{CorpusError, FrameError, SseError, TraceError};

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("network error: {0}")]
    Net(#[from] io::Error),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{0} is not a store (missing index.bin or docs/)")]
    NotAStore(PathBuf),
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server error: {0}")]
    Server(String),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("file-access fidelity violated on {0} queries")]
    Fidelity(usize),
    #[error("trace is not correlatable: {0}")]
    NotCorrelatable(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sse(#[from] SseError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }

    /// Process exit code: 2 config, 3 runtime, 4 provider unavailable.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Config(_) => 2,
            LabError::ProviderUnavailable(_) => 4,
            _ => 3,
        }
    }
}
