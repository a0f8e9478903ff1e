use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("map point cloud is empty")]
    EmptyMap,

    #[error("distance field of {nx}x{ny}x{nz} voxels exceeds the budget of {budget} voxels")]
    Capacity {
        nx: usize,
        ny: usize,
        nz: usize,
        budget: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("every residual exceeded the gate; the scan is degenerate ({points} points)")]
    DegenerateScan { points: usize },

    #[error("non-finite cost at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("Cholesky factorization failed: {0}")]
    Cholesky(String),

    #[error("no world points within {max_range} m of the sensor")]
    NoVisiblePoints { max_range: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("trajectory lengths differ: estimate has {estimate} rows, ground truth has {ground_truth}")]
    LengthMismatch { estimate: usize, ground_truth: usize },
}

impl Error {
    /// Process exit code: 1 usage or configuration, 2 I/O or input data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => 1,
            Error::Io { .. } | Error::Parse { .. } | Error::EmptyMap | Error::LengthMismatch { .. } => 2,
            Error::Capacity { .. }
            | Error::DegenerateScan { .. }
            | Error::NonFinite { .. }
            | Error::Cholesky(_)
            | Error::NoVisiblePoints { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
