use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input extents {height}x{width} are not multiples of 32x8")]
    IndivisibleInput { height: usize, width: usize },

    #[error("charset mismatch: {0}")]
    CharsetMismatch(String),

    #[error("character {ch:?} is not in the charset")]
    UnknownCharacter { ch: char },

    #[error("unsupported glyph {0:?}: no bitmap available")]
    UnsupportedGlyph(char),

    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("manifest {path} line {line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },

    #[error("manifest {path}: {} problem(s):\n{}", issues.len(), issues.join("\n"))]
    ManifestIssues { path: PathBuf, issues: Vec<String> },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
