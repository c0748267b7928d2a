//! Weighted Poisson-disk resampling of point clouds: voxel-based radius
//! estimation, count-controlled Poisson-disk subsampling, tangent-plane
//! Voronoi smoothing, sharp-feature handling and uniformity metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod error;
pub mod feature;
pub mod index;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod poisson;
pub mod smooth;
pub mod synth;
pub mod tangent;

pub use cloud::{BoundingBox, Point3, PointClass, PointCloud, VoxelGrid};
pub use error::{Error, Result};
pub use feature::{ClassSource, Classification, DualRadii};
pub use index::SpatialIndex;
pub use io::{read_cloud, write_cloud, CloudFormat};
pub use metrics::{ConsistencyReport, Direction, UniformityReport};
pub use pipeline::{resample, FeatureMode, ResampleConfig, RunReport};
pub use poisson::{RadiusEstimate, RefinementState};
pub use smooth::{PassStats, SmoothConfig};
pub use tangent::{LocalFrame, TangentNeighborhood};
