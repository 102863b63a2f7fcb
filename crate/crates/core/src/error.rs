use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("unknown camera model: {0}")]
    UnknownCameraModel(String),

    #[error("image referenced by {referenced_by} not found: {path}")]
    MissingImage { path: PathBuf, referenced_by: String },

    #[error("image {name} is {actual:?} but camera {camera_id} expects {expected:?}")]
    ImageSizeMismatch {
        name: String,
        camera_id: u32,
        actual: (usize, usize),
        expected: (usize, usize),
    },

    #[error("ply: {0}")]
    Ply(String),

    #[error("missing required property: {0}")]
    MissingProperty(String),

    #[error("image: {0}")]
    Image(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot initialize from empty cloud")]
    EmptyInit,

    #[error("pruned to empty cloud")]
    PrunedToEmpty,

    #[error("insufficient views: need at least 2 registered views with images, got {0}")]
    InsufficientViews(usize),

    #[error("non-finite loss at iteration {iteration} (view {view})")]
    NonFiniteLoss { iteration: usize, view: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
