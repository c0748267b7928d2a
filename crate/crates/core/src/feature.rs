//! Edge/normal classification for the sharp-feature mode: external label
//! files, a surface-variation detector, halved edge radii and the smoothing
//! freeze rule.

use std::fs;
use std::path::Path;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointClass, PointCloud};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::tangent::covariance;

pub const DEFAULT_DETECT_K: usize = 16;
pub const DEFAULT_DETECT_TAU: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassSource {
    ExternalLabels,
    CovarianceDetector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub classes: Vec<PointClass>,
    pub source: ClassSource,
}

impl Classification {
    pub fn edge_count(&self) -> usize {
        self.classes.iter().filter(|&&c| c == PointClass::Edge).count()
    }
}

/// Normal-point radius and the halved edge-point radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualRadii {
    pub r: f64,
    pub r_e: f64,
}

impl DualRadii {
    pub fn new(r: f64) -> Self {
        DualRadii { r, r_e: r / 2.0 }
    }
}

/// Reads a label file: one `0` (normal) or `1` (edge) per line, in point
/// order.
pub fn load_labels(path: impl AsRef<Path>, expected_count: usize) -> Result<Classification> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path, expected_count)
}

pub(crate) fn parse_labels(text: &str, path: &Path, expected_count: usize) -> Result<Classification> {
    let body = text.trim_end();
    let mut classes = Vec::with_capacity(expected_count);
    if !body.is_empty() {
        for (i, line) in body.lines().enumerate() {
            let token = line.trim();
            let class = match token {
                "0" => PointClass::Normal,
                "1" => PointClass::Edge,
                _ => {
                    return Err(Error::LabelParse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        token: token.to_string(),
                    })
                }
            };
            classes.push(class);
        }
    }
    if classes.len() != expected_count {
        return Err(Error::LabelCountMismatch {
            labels: classes.len(),
            points: expected_count,
        });
    }
    Ok(Classification {
        classes,
        source: ClassSource::ExternalLabels,
    })
}

pub fn format_labels(classes: &[PointClass]) -> String {
    let mut s = String::with_capacity(classes.len() * 2);
    for c in classes {
        s.push(if *c == PointClass::Edge { '1' } else { '0' });
        s.push('\n');
    }
    s
}

/// Surface variation `l0 / (l0 + l1 + l2)` of each point's `k`-NN
/// covariance (the point itself included), `l0` the smallest eigenvalue.
/// `None` where all eigenvalues vanish.
pub fn surface_variation(cloud: &PointCloud, k: usize) -> Result<Vec<Option<f64>>> {
    if cloud.len() < k + 1 {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            available: cloud.len(),
        });
    }
    let index = SpatialIndex::build(&cloud.points)?;
    (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nn = index.knn_of(i, k)?;
            let mut pts = Vec::with_capacity(k + 1);
            pts.push(cloud.points[i]);
            pts.extend(nn.iter().map(|n| cloud.points[n.index]));
            let eig = SymmetricEigen::new(covariance(&pts)).eigenvalues;
            let mut l = [eig[0].max(0.0), eig[1].max(0.0), eig[2].max(0.0)];
            l.sort_by(f64::total_cmp);
            let sum = l[0] + l[1] + l[2];
            Ok((sum > 0.0).then(|| l[0] / sum))
        })
        .collect()
}

/// Edge iff surface variation exceeds `tau`; degenerate neighborhoods are
/// normal.
pub fn detect_edges_covariance(cloud: &PointCloud, k: usize, tau: f64) -> Result<Classification> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let sigma = surface_variation(cloud, k)?;
    let classes = sigma
        .into_iter()
        .map(|s| match s {
            Some(s) if s > tau => PointClass::Edge,
            _ => PointClass::Normal,
        })
        .collect();
    Ok(Classification {
        classes,
        source: ClassSource::CovarianceDetector,
    })
}

/// Per-point Poisson radius: `r / 2` for edge points, `r` otherwise.
pub fn assign_radii(classification: &Classification, r: f64) -> Result<Vec<f64>> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidRadius(r));
    }
    let dual = DualRadii::new(r);
    Ok(classification
        .classes
        .iter()
        .map(|c| match c {
            PointClass::Edge => dual.r_e,
            PointClass::Normal => dual.r,
        })
        .collect())
}

/// Radius multipliers relative to the normal-point radius.
pub fn radius_scale(classes: &[PointClass]) -> Vec<f64> {
    classes
        .iter()
        .map(|c| if *c == PointClass::Edge { 0.5 } else { 1.0 })
        .collect()
}

/// An edge point keeps its position when any of its neighbors is a normal
/// point.
pub fn edge_freeze_predicate(i: usize, classes: &[PointClass], neighbors: &[usize]) -> bool {
    classes[i] == PointClass::Edge && neighbors.iter().any(|&j| classes[j] == PointClass::Normal)
}
