use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid filter asset: {0}")]
    InvalidAsset(String),

    #[error("degenerate placement: {0}")]
    DegeneratePlacement(String),

    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),

    #[error("invalid face record: {0}")]
    InvalidRecord(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid subdivision: {0}")]
    InvalidSubdivision(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("degenerate range [{min}, {max}]")]
    DegenerateRange { min: f64, max: f64 },

    #[error("zero-variance input cannot be embedded")]
    ZeroVector,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("stage `{stage}` needs `{missing}`, which has not been produced")]
    StageDependency { stage: String, missing: String },

    #[error("artifact `{artifact}` is stale: {reason}")]
    StaleArtifact { artifact: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Nn(#[from] defilter_nn::NnError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
