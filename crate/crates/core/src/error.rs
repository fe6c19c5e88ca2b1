use std::path::{Path, PathBuf};

use crate::sample::Modality;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("modality mismatch: expected {expected}, got {actual}")]
    ModalityMismatch { expected: Modality, actual: Modality },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty gallery")]
    EmptyGallery,

    #[error("degenerate gallery: centered data has no nonzero variance")]
    DegenerateGallery,

    #[error("undefined correlation: image is identically zero")]
    UndefinedCorrelation,

    #[error("unknown subject: {0}")]
    UnknownSubject(String),

    #[error("template without subject label")]
    UnlabeledTemplate,

    #[error("expected {expected} votes, got {actual}")]
    VoteCount { expected: usize, actual: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unsupported format version {0}")]
    FormatVersion(u32),

    #[error("stale store: {modality} templates were built against model {stored}, loaded model is {loaded}")]
    StaleStore {
        modality: Modality,
        stored: String,
        loaded: String,
    },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Writes `text` to `path`, creating missing parent directories.
pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
