use std::path::PathBuf;

use thiserror::Error;

/// Errors loading or querying the opcode and mapping tables.
#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate entry {key}")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: unknown classification {token:?}")]
    UnknownClassification { line: usize, token: String },
    #[error("unknown mnemonic {0}")]
    UnknownMnemonic(String),
    #[error("bundled mapping table: {0}")]
    Cardinality(String),
}

/// Errors while ingesting or persisting a corpus.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("corpus store at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("unknown mnemonic {0}")]
    UnknownMnemonic(String),
}

impl CorpusError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CorpusError::Io {
            context: context.into(),
            source,
        }
    }
}

/// Errors from finding normalization and the agreement analytics.
#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("unknown finding {finding:?} for tool {tool}")]
    UnknownFinding { tool: String, finding: String },
    #[error("unknown tool {0}")]
    UnknownTool(String),
    #[error("no included tool covers {0}")]
    ClassNotCovered(String),
    #[error("tools {0} and {1} share no SWC class")]
    NoSharedClass(String, String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}
