//! Points, clouds, bounding boxes and the voxel grid used for surface-area
//! estimation.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point (or free vector) in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn axis(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Squared Euclidean distance. Every distance in the crate goes through
    /// this so that brute-force checks reproduce the same bits.
    #[inline]
    pub fn distance_squared(self, o: Point3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(self, o: Point3) -> f64 {
        self.distance_squared(o).sqrt()
    }

    pub fn normalized(self) -> Option<Point3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min(self, o: Point3) -> Point3 {
        Point3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Point3) -> Point3 {
        Point3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Point3) {
        *self = *self + o;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointClass {
    Normal,
    Edge,
}

impl PointClass {
    pub fn label(self) -> u8 {
        match self {
            PointClass::Normal => 0,
            PointClass::Edge => 1,
        }
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(PointClass::Normal),
            1 => Some(PointClass::Edge),
            _ => None,
        }
    }
}

/// Positions plus optional per-point attributes. Attribute vectors, when
/// present, are parallel to `points`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Point3>>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub classes: Option<Vec<PointClass>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the attribute-length and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        let mismatch = |what: &str, len: usize| {
            Error::InvalidConfig(format!("{what} has {len} entries for {n} points"))
        };
        if let Some(v) = &self.normals {
            if v.len() != n {
                return Err(mismatch("normals", v.len()));
            }
        }
        if let Some(v) = &self.colors {
            if v.len() != n {
                return Err(mismatch("colors", v.len()));
            }
        }
        if let Some(v) = &self.classes {
            if v.len() != n {
                return Err(mismatch("classes", v.len()));
            }
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(format!("point {i} is not finite")));
        }
        Ok(())
    }

    /// Builds a new cloud from the given indices, carrying attributes along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        fn pick<T: Copy>(v: &Option<Vec<T>>, idx: &[usize]) -> Option<Vec<T>> {
            v.as_ref().map(|v| idx.iter().map(|&i| v[i]).collect())
        }
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: pick(&self.normals, indices),
            colors: pick(&self.colors, indices),
            classes: pick(&self.classes, indices),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point3,
    pub max: Point3,
}

impl BoundingBox {
    /// Extents along x, y and z.
    pub fn extents(&self) -> [f64; 3] {
        [
            self.max.x - self.min.x,
            self.max.y - self.min.y,
            self.max.z - self.min.z,
        ]
    }

    pub fn max_extent(&self) -> f64 {
        let [l, w, h] = self.extents();
        l.max(w).max(h)
    }

    pub fn diagonal(&self) -> f64 {
        self.min.distance(self.max)
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0..3).all(|a| p.axis(a) >= self.min.axis(a) && p.axis(a) <= self.max.axis(a))
    }
}

pub fn compute_bbox(cloud: &PointCloud) -> Result<BoundingBox> {
    bbox_of(&cloud.points)
}

pub(crate) fn bbox_of(points: &[Point3]) -> Result<BoundingBox> {
    let first = *points.first().ok_or(Error::EmptyInput)?;
    let (min, max) = points
        .iter()
        .fold((first, first), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    Ok(BoundingBox { min, max })
}

pub const DEFAULT_VOXEL_FACTOR: f64 = 0.05;

/// `0.05 * max(l, w, h)`.
pub fn default_voxel_length(bbox: &BoundingBox) -> Result<f64> {
    voxel_length(bbox, DEFAULT_VOXEL_FACTOR)
}

/// `factor * max(l, w, h)`.
pub fn voxel_length(bbox: &BoundingBox, factor: f64) -> Result<f64> {
    let e = bbox.max_extent();
    if !(e > 0.0) {
        return Err(Error::DegenerateBoundingBox);
    }
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidConfig(format!("voxel factor must be positive, got {factor}")));
    }
    Ok(factor * e)
}

/// Occupied voxels of a cloud over a grid anchored at the bounding-box minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub l_v: f64,
    pub origin: Point3,
    /// Number of voxel slabs along each axis, `floor(extent / l_v) + 1`.
    pub dims: [i64; 3],
    /// Distinct occupied voxel indices, sorted.
    pub occupied: Vec<[i64; 3]>,
}

impl VoxelGrid {
    /// Number of occupied voxels.
    pub fn m(&self) -> usize {
        self.occupied.len()
    }

    /// Voxel index owning `p` by the floor rule. A point on a voxel face
    /// belongs to the higher-index voxel, including on the global max face.
    pub fn index_of(&self, p: Point3) -> [i64; 3] {
        let mut idx = [0i64; 3];
        for (a, slot) in idx.iter_mut().enumerate() {
            let raw = ((p.axis(a) - self.origin.axis(a)) / self.l_v).floor() as i64;
            *slot = raw.clamp(0, self.dims[a] - 1);
        }
        idx
    }

    pub fn contains(&self, idx: &[i64; 3]) -> bool {
        self.occupied.binary_search(idx).is_ok()
    }
}

pub fn voxelize(cloud: &PointCloud, l_v: f64) -> Result<VoxelGrid> {
    if !(l_v > 0.0) || !l_v.is_finite() {
        return Err(Error::InvalidVoxelLength(l_v));
    }
    let bbox = compute_bbox(cloud)?;
    let ext = bbox.extents();
    let mut dims = [1i64; 3];
    for a in 0..3 {
        dims[a] = (ext[a] / l_v).floor() as i64 + 1;
    }
    let mut grid = VoxelGrid {
        l_v,
        origin: bbox.min,
        dims,
        occupied: Vec::new(),
    };
    let mut keys: Vec<[i64; 3]> = cloud.points.par_iter().map(|&p| grid.index_of(p)).collect();
    keys.par_sort_unstable();
    keys.dedup();
    grid.occupied = keys;
    Ok(grid)
}
