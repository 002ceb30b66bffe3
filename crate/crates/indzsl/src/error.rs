use std::path::PathBuf;

/// Failures while reading or writing one of the on-disk formats.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a {expected} file (bad magic)")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("{path}: unsupported version {found} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: truncated at byte {offset} while reading {what}")]
    Truncated {
        path: PathBuf,
        offset: u64,
        what: &'static str,
    },
    #[error("{path}: at byte {offset}: {message}")]
    Invalid { path: PathBuf, offset: u64, message: String },
    #[error("{path}: line {line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] indzsl_core::Error),
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }
}

/// A pipeline failure tagged with the stage that produced it.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: anyhow::Error,
}

pub type FormatResult<T> = std::result::Result<T, FormatError>;
