use std::path::PathBuf;

use thiserror::Error;

use crate::cloud::PointCloud;
use crate::poisson::RefinementState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("degenerate bounding box")]
    DegenerateBoundingBox,

    #[error("invalid voxel length: {0}")]
    InvalidVoxelLength(f64),

    #[error("invalid radius: {0}")]
    InvalidRadius(f64),

    #[error("insufficient points: need {needed}, have {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("target count must be positive")]
    NonPositiveTarget,

    #[error("target exceeds input size ({target} > {available})")]
    TargetExceedsInput { target: usize, available: usize },

    #[error("cannot trim below input size ({target} > {available})")]
    CannotTrim { target: usize, available: usize },

    /// Refinement ran out of iterations. Carries the subset whose count was
    /// closest to the target together with the loop state.
    #[error("radius refinement did not converge after {iterations} iterations (best count {best_count}, target {target})")]
    NonConvergence {
        iterations: usize,
        best_count: usize,
        target: usize,
        best: Box<(PointCloud, RefinementState)>,
    },

    #[error("degenerate neighborhood")]
    DegenerateNeighborhood,

    #[error("degenerate projection")]
    DegenerateProjection,

    #[error("boundary point, no weights")]
    BoundaryPoint,

    #[error("insufficient interior points: {closed} of {total} cells closed")]
    InsufficientInterior { closed: usize, total: usize },

    #[error("label/point count mismatch: {labels} labels for {points} points")]
    LabelCountMismatch { labels: usize, points: usize },

    #[error("{path}: line {line}: invalid label {token:?}, expected 0 or 1")]
    LabelParse {
        path: PathBuf,
        line: usize,
        token: String,
    },

    #[error("{path}: {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("{path}: unsupported format, expected one of: .ply (ascii or binary_little_endian), .xyz")]
    UnsupportedFormat { path: PathBuf },

    #[error("refusing to write empty cloud")]
    EmptyWrite,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
