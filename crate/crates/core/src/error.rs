use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point lies behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid depth {0}: must be strictly positive")]
    InvalidDepth(f64),
    #[error("central camera ray does not intersect the scene boundary")]
    NoIntersection,
    #[error("no probability mass landed inside the camera frustum")]
    EmptyGrid,
    #[error("distribution has zero total mass")]
    DegenerateDistribution,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed grid dump: {0}")]
    MalformedDump(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Write(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
