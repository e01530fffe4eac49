//! Pseudo-label curation for code-switching ASR.
//!
//! Implements the data side of a noisy-student-training loop: greedy ASR
//! hypotheses are corrected by a chat-completion LLM, the greedy-vs-corrected
//! discrepancy (Hypo-MER) gates which utterances survive as pseudo labels,
//! kept data is duration-balanced across languages, and each iteration emits
//! a training manifest plus summary statistics.

pub mod config;
pub mod filter;
pub mod llm_correct;
pub mod manifest;
pub mod metrics;
pub mod orchestrator;
pub mod sim;
pub mod textnorm;

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed manifest record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: duplicate utt_id \"{utt_id}\"")]
    DuplicateUttId {
        path: PathBuf,
        line: usize,
        utt_id: String,
    },
    #[error("utterance \"{utt_id}\": {reason}")]
    InvalidEntry { utt_id: String, reason: String },
    #[error("utterance \"{utt_id}\" is missing required field `{field}`")]
    MissingField { utt_id: String, field: String },
    #[error("utterance \"{utt_id}\": hypothesis contains protocol delimiter {delimiter:?}")]
    UnsanitizedHypothesis { utt_id: String, delimiter: char },
    #[error("response parse error: found {found} corrected groups, expected {expected}")]
    ParseMismatch { found: usize, expected: usize },
    #[error("response parse error: {0}")]
    ParseMalformed(String),
    #[error("endpoint transport error: {0}")]
    Transport(String),
    #[error("endpoint configuration error: {0}")]
    EndpointConfig(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot compute report over an empty utterance list")]
    EmptyReport,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
