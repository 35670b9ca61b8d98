//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,

    #[error("operation requires a nonempty class")]
    EmptyClass,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("datasets share no mineral species")]
    EmptyIntersection,

    #[error("training requires at least two classes")]
    SingleClass,

    #[error("formula error: {0}")]
    Formula(String),

    #[error("no emission lines for element {0}")]
    MissingLines(String),

    #[error("no peaks detected in spectrum")]
    NoPeaks,

    #[error("architecture error: {0}")]
    Arch(String),

    #[error("training diverged: loss is not finite")]
    Diverged,

    #[error("predictions have different class lists")]
    ClassMismatch,

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs (files, formats, parameters)
    /// rather than by a failure while computing.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Diverged | Error::Io(_))
    }
}
