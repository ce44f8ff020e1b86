use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("LM has no blank in support")]
    BlankInLm,

    #[error("all frames consumed (t = {t}, T = {frames})")]
    AllFramesConsumed { t: usize, frames: usize },

    #[error("enumeration bound exceeded: {0}")]
    EnumerationBound(String),

    #[error("density ratio requires source-domain LM")]
    MissingSourceLm,

    #[error("source LM assigns zero probability to label {label} after {history:?} while the target LM does not")]
    ZeroSourceMass { label: u32, history: Vec<u32> },

    #[error("source LM may assign zero probability to labels; density ratio needs add_k > 0")]
    SourceLmNotZeroFree,

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("invalid symbol {id} for vocabulary of {num_labels} labels")]
    InvalidSymbol { id: u32, num_labels: usize },

    #[error("invalid alignment: {0}")]
    InvalidAlignment(String),

    #[error("table scorer has no distribution for t = {t}, history {history:?}")]
    MissingTableEntry { t: usize, history: Vec<u32> },

    #[error("all references are empty")]
    EmptyReferences,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {what} at line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            what,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
