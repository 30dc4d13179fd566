use std::path::PathBuf;

use thiserror::Error;

/// Coarse error class, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("duplicate Voronoi sites {first} and {second}")]
    DuplicateSites { first: usize, second: usize },

    #[error("site {site} lies outside the bounding box")]
    SiteOutsideBox { site: usize },

    #[error("invalid geohash character {ch:?} at position {position}")]
    InvalidGeohash { ch: char, position: usize },

    #[error("geohash {0} touches a pole; neighbors are undefined")]
    PolarGeohash(String),

    #[error("unknown region id {0}")]
    UnknownRegion(usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Schema(_) | Error::Argument(_) => ErrorCategory::Config,
            Error::Data(_)
            | Error::DuplicateSites { .. }
            | Error::SiteOutsideBox { .. }
            | Error::InvalidGeohash { .. }
            | Error::PolarGeohash(_)
            | Error::UnknownRegion(_)
            | Error::Shape { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => ErrorCategory::Data,
            Error::NonFinite(_) | Error::AllTrialsFailed(_) => ErrorCategory::Runtime,
            Error::Stage { source, .. } => source.category(),
        }
    }
}
