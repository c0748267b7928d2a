//! Geometric consistency (Hausdorff, mean distance) and uniformity (local
//! and Voronoi density error) measurements.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::tangent::neighborhood_from;

pub const DEFAULT_METRIC_K: usize = 6;
pub const VORONOI_DEFINITION: &str = "tangent-cell-area-spread";
/// Minimum share of closed cells for the Voronoi density error.
pub const MIN_CLOSED_FRACTION: f64 = 0.1;

/// Deterministic pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn nonempty(c: &PointCloud) -> Result<()> {
    if c.is_empty() {
        Err(Error::EmptyInput)
    } else {
        Ok(())
    }
}

/// Distance from every point of `a` to its nearest point of `b`.
pub fn nearest_distances(a: &PointCloud, b: &PointCloud) -> Result<Vec<f64>> {
    nonempty(a)?;
    nonempty(b)?;
    let index = SpatialIndex::build(&b.points)?;
    a.points
        .par_iter()
        .map(|&p| Ok(index.knn(p, 1, None)?[0].distance))
        .collect()
}

/// Directed `max_a min_b |a - b|`, or the larger of both directions.
pub fn hausdorff(a: &PointCloud, b: &PointCloud, symmetric: bool) -> Result<f64> {
    let ab = nearest_distances(a, b)?.into_iter().fold(0.0, f64::max);
    if !symmetric {
        return Ok(ab);
    }
    let ba = nearest_distances(b, a)?.into_iter().fold(0.0, f64::max);
    Ok(ab.max(ba))
}

/// Directed mean of nearest distances from `a` to `b`.
pub fn mean_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let d = nearest_distances(a, b)?;
    Ok(pairwise_sum(&d) / d.len() as f64)
}

/// Mean distance from each point to its `k` nearest neighbors.
pub fn mean_knn_distances(index: &SpatialIndex, k: usize) -> Result<Vec<f64>> {
    (0..index.len())
        .into_par_iter()
        .map(|i| {
            let nb = index.knn_of(i, k)?;
            let d: Vec<f64> = nb.iter().map(|n| n.distance).collect();
            Ok(pairwise_sum(&d) / k as f64)
        })
        .collect()
}

/// Whether each point's Voronoi cell among its `k` projected neighbors is
/// closed. Degenerate neighborhoods count as open.
pub fn closed_cells(index: &SpatialIndex, k: usize) -> Result<Vec<bool>> {
    cell_areas(index, k).map(|a| a.into_iter().map(|a| a.is_some()).collect())
}

/// Tangent-plane Voronoi cell area of each point against its `k` nearest
/// neighbors, `None` for open or degenerate cells.
pub fn cell_areas(index: &SpatialIndex, k: usize) -> Result<Vec<Option<f64>>> {
    (0..index.len())
        .into_par_iter()
        .map(|i| {
            let ids: Vec<usize> = index.knn_of(i, k)?.iter().map(|n| n.index).collect();
            match neighborhood_from(index, i, &ids) {
                Ok(tn) => Ok(tn.cell_area()),
                Err(Error::DegenerateNeighborhood | Error::DegenerateProjection) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn check_size(cloud: &PointCloud, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if cloud.len() < k + 1 {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            available: cloud.len(),
        });
    }
    Ok(())
}

fn spread(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (lo <= hi).then_some(hi - lo)
}

/// `max(d_i) - min(d_i)` of the mean `k`-NN distances. With
/// `interior_only`, points with open tangent cells are left out.
pub fn local_density_error(cloud: &PointCloud, k: usize, interior_only: bool) -> Result<f64> {
    check_size(cloud, k)?;
    let index = SpatialIndex::build(&cloud.points)?;
    let d = mean_knn_distances(&index, k)?;
    if !interior_only {
        return Ok(spread(d.into_iter()).expect("nonempty"));
    }
    let closed = closed_cells(&index, k)?;
    spread(d.into_iter().zip(&closed).filter(|(_, &c)| c).map(|(d, _)| d)).ok_or(
        Error::InsufficientInterior {
            closed: 0,
            total: cloud.len(),
        },
    )
}

/// `max - min` of the tangent Voronoi cell areas over closed cells.
pub fn voronoi_density_error(cloud: &PointCloud, k: usize) -> Result<f64> {
    check_size(cloud, k)?;
    let index = SpatialIndex::build(&cloud.points)?;
    let areas: Vec<f64> = cell_areas(&index, k)?.into_iter().flatten().collect();
    if areas.is_empty() || (areas.len() as f64) < MIN_CLOSED_FRACTION * cloud.len() as f64 {
        return Err(Error::InsufficientInterior {
            closed: areas.len(),
            total: cloud.len(),
        });
    }
    Ok(spread(areas.into_iter()).expect("nonempty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ResampledToOriginal,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub hausdorff: f64,
    pub mean: f64,
    pub direction: Direction,
}

/// Hausdorff and mean distance of `resampled` against `original`. The
/// symmetric mean is the larger of the two directed means.
pub fn consistency_report(resampled: &PointCloud, original: &PointCloud, symmetric: bool) -> Result<ConsistencyReport> {
    let fwd = nearest_distances(resampled, original)?;
    let mut hausdorff = fwd.iter().copied().fold(0.0, f64::max);
    let mut mean = pairwise_sum(&fwd) / fwd.len() as f64;
    if symmetric {
        let back = nearest_distances(original, resampled)?;
        hausdorff = hausdorff.max(back.iter().copied().fold(0.0, f64::max));
        mean = mean.max(pairwise_sum(&back) / back.len() as f64);
    }
    Ok(ConsistencyReport {
        hausdorff,
        mean,
        direction: if symmetric {
            Direction::Symmetric
        } else {
            Direction::ResampledToOriginal
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub d_local: f64,
    /// `None` when too few cells are closed.
    pub d_voronoi: Option<f64>,
    pub k: usize,
    pub interior_only: bool,
    pub voronoi_definition: String,
    pub closed_cells: usize,
    pub points: usize,
}

pub fn uniformity_report(cloud: &PointCloud, k: usize, interior_only: bool) -> Result<UniformityReport> {
    check_size(cloud, k)?;
    let index = SpatialIndex::build(&cloud.points)?;
    let d = mean_knn_distances(&index, k)?;
    let areas = cell_areas(&index, k)?;
    let closed = areas.iter().filter(|a| a.is_some()).count();
    let d_local = if interior_only {
        spread(d.iter().zip(&areas).filter(|(_, a)| a.is_some()).map(|(d, _)| *d))
    } else {
        spread(d.iter().copied())
    }
    .unwrap_or(0.0);
    let d_voronoi = (closed > 0 && closed as f64 >= MIN_CLOSED_FRACTION * cloud.len() as f64)
        .then(|| spread(areas.iter().flatten().copied()).expect("nonempty"));
    Ok(UniformityReport {
        d_local,
        d_voronoi,
        k,
        interior_only,
        voronoi_definition: VORONOI_DEFINITION.to_string(),
        closed_cells: closed,
        points: cloud.len(),
    })
}

/// Applies `x -> s * R x + t` to every point.
pub fn rigid_transform(points: &[Point3], rotation: [[f64; 3]; 3], translation: Point3, scale: f64) -> Vec<Point3> {
    points
        .iter()
        .map(|p| {
            let v = p.to_array();
            let r = |row: [f64; 3]| row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
            Point3::new(r(rotation[0]), r(rotation[1]), r(rotation[2])) * scale + translation
        })
        .collect()
}
