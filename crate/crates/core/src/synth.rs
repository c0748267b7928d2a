//! Seeded synthetic clouds for tests, benchmarks and demos.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{Point3, PointCloud, PointClass};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform samples on a sphere surface.
pub fn sphere(count: usize, radius: f64, seed: u64) -> PointCloud {
    let mut rng = rng(seed);
    let pts = (0..count)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..=1.0);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let s = (1.0 - z * z).max(0.0).sqrt();
            Point3::new(radius * s * phi.cos(), radius * s * phi.sin(), radius * z)
        })
        .collect();
    PointCloud::from_points(pts)
}

/// Area-uniform samples on a torus with tube radius `minor` around a circle
/// of radius `major` in the xy plane.
pub fn torus(count: usize, major: f64, minor: f64, seed: u64) -> PointCloud {
    let mut rng = rng(seed);
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let u: f64 = rng.random_range(0.0..2.0 * PI);
        let v: f64 = rng.random_range(0.0..2.0 * PI);
        let w: f64 = rng.random_range(0.0..1.0);
        // Area element is proportional to (major + minor cos v).
        if w * (major + minor) > major + minor * v.cos() {
            continue;
        }
        let ring = major + minor * v.cos();
        pts.push(Point3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()));
    }
    PointCloud::from_points(pts)
}

/// Uniform random samples on the square `[0, size]^2` at `z = 0`.
pub fn plane(count: usize, size: f64, seed: u64) -> PointCloud {
    let mut rng = rng(seed);
    let pts = (0..count)
        .map(|_| {
            Point3::new(
                rng.random_range(0.0..size),
                rng.random_range(0.0..size),
                0.0,
            )
        })
        .collect();
    PointCloud::from_points(pts)
}

/// A regular `nx * ny` grid in the plane `z = z`, each point perturbed
/// uniformly within `+-jitter` per in-plane axis. Row-major, x fastest.
pub fn jittered_grid(nx: usize, ny: usize, spacing: f64, jitter: f64, z: f64, seed: u64) -> PointCloud {
    let mut rng = rng(seed);
    let mut pts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (dx, dy) = if jitter > 0.0 {
                (rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter))
            } else {
                (0.0, 0.0)
            };
            pts.push(Point3::new(i as f64 * spacing + dx, j as f64 * spacing + dy, z));
        }
    }
    PointCloud::from_points(pts)
}

/// Two unit squares meeting at a right angle along the y axis: the floor
/// `z = 0, x in [0, 1]` and the wall `x = 0, z in [0, 1]`. Points within
/// `edge_band` of the crease are labeled [`PointClass::Edge`].
pub fn dihedral(count: usize, edge_band: f64, seed: u64) -> PointCloud {
    let mut rng = rng(seed);
    let mut pts = Vec::with_capacity(count);
    let mut classes = Vec::with_capacity(count);
    for _ in 0..count {
        let a: f64 = rng.random_range(0.0..1.0);
        let y: f64 = rng.random_range(0.0..1.0);
        let p = if rng.random_bool(0.5) {
            Point3::new(a, y, 0.0)
        } else {
            Point3::new(0.0, y, a)
        };
        classes.push(if a < edge_band {
            PointClass::Edge
        } else {
            PointClass::Normal
        });
        pts.push(p);
    }
    PointCloud {
        points: pts,
        classes: Some(classes),
        ..Default::default()
    }
}

/// Area-uniform samples on the surface of an axis-aligned box with the
/// given extents, anchored at the origin.
pub fn box_shell(count: usize, extents: [f64; 3], seed: u64) -> PointCloud {
    let mut rng = rng(seed);
    let [l, w, h] = extents;
    let faces = [w * h, w * h, l * h, l * h, l * w, l * w];
    let total: f64 = faces.iter().sum();
    let pts = (0..count)
        .map(|_| {
            let mut t = rng.random_range(0.0..total);
            let mut f = 0;
            while f < 5 && t >= faces[f] {
                t -= faces[f];
                f += 1;
            }
            let (u, v): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            match f {
                0 => Point3::new(0.0, u * w, v * h),
                1 => Point3::new(l, u * w, v * h),
                2 => Point3::new(u * l, 0.0, v * h),
                3 => Point3::new(u * l, w, v * h),
                4 => Point3::new(u * l, v * w, 0.0),
                _ => Point3::new(u * l, v * w, h),
            }
        })
        .collect();
    PointCloud::from_points(pts)
}

/// Interior patch of a hexagonal lattice with unit spacing, `rows * cols`.
pub fn hex_lattice(rows: usize, cols: usize) -> PointCloud {
    let h = 3f64.sqrt() / 2.0;
    let mut pts = Vec::with_capacity(rows * cols);
    for j in 0..rows {
        let off = if j % 2 == 0 { 0.0 } else { 0.5 };
        for i in 0..cols {
            pts.push(Point3::new(i as f64 + off, j as f64 * h, 0.0));
        }
    }
    PointCloud::from_points(pts)
}
