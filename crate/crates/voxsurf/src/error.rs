use std::path::PathBuf;

/// Errors surfaced by grid construction, training, and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate grid: voxel size {voxel_size} exceeds bounds extent {extent}")]
    DegenerateGrid { voxel_size: f64, extent: f64 },

    #[error("empty grid after prune (tau = {tau})")]
    EmptyGridAfterPrune { tau: f64 },

    #[error("overlapping instance: {count} voxel pairs collide")]
    OverlappingInstance { count: usize },

    #[error("non-finite loss at iteration {iteration}: {details}")]
    NonFiniteLoss { iteration: u64, details: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
