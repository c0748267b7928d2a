//! Exact-count trimming and weighted tangent smoothing.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointClass, PointCloud};
use crate::error::{Error, Result};
use crate::feature::edge_freeze_predicate;
use crate::index::SpatialIndex;
use crate::tangent::{cotangent_weights, neighborhood_from, restricted_cell_centroid};

pub const DEFAULT_SMOOTH_K: usize = 16;
pub const DEFAULT_SMOOTH_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    bits: u64,
    index: u32,
}

impl Key {
    fn new(d: f64, index: usize) -> Self {
        // Nonnegative finite floats order like their bit patterns.
        Key {
            bits: d.to_bits(),
            index: index as u32,
        }
    }
}

/// Deletes points one at a time until `n` remain, always the point whose
/// current nearest-neighbor distance is smallest (lower index on ties).
pub fn trim_to_exact_count(cloud: &PointCloud, n: usize) -> Result<PointCloud> {
    let keep = trim_indices(&cloud.points, n, None)?;
    Ok(cloud.select(&keep))
}

/// Index form of [`trim_to_exact_count`]; returns the kept indices,
/// ascending.
///
/// With `scale`, the distance between `i` and `j` is divided by
/// `min(scale[i], scale[j])`, matching the per-point Poisson rule so that
/// half-radius points are not trimmed just for being dense.
pub fn trim_indices(points: &[Point3], n: usize, scale: Option<&[f64]>) -> Result<Vec<usize>> {
    let len = points.len();
    if n > len {
        return Err(Error::CannotTrim {
            target: n,
            available: len,
        });
    }
    if n == len {
        return Ok((0..len).collect());
    }
    if n == 0 {
        return Err(Error::NonPositiveTarget);
    }
    if let Some(s) = scale {
        if s.len() != len {
            return Err(Error::InvalidConfig("radius scale length mismatch".into()));
        }
    }
    let index = SpatialIndex::build(points)?;
    let s = |i: usize| scale.map_or(1.0, |s| s[i]);
    let mut alive = vec![true; len];
    // Current (key, partner) per point.
    let mut best: Vec<(f64, usize)> = vec![(0.0, 0); len];

    let nearest = |i: usize, alive: &[bool]| -> (f64, usize) {
        if scale.is_none() {
            let nb = index.knn_filtered(points[i], 1, |j| j != i && alive[j]);
            return (nb[0].distance, nb[0].index);
        }
        // Scaled keys need more than the single nearest point; grow the
        // search until the unscaled distance bound rules out the rest.
        let mut k = 8;
        loop {
            let nb = index.knn_filtered(points[i], k, |j| j != i && alive[j]);
            let mut top = (f64::INFINITY, usize::MAX);
            for h in &nb {
                let key = h.distance / s(i).min(s(h.index));
                if key < top.0 || (key == top.0 && h.index < top.1) {
                    top = (key, h.index);
                }
            }
            let exhausted = nb.len() < k;
            // Unseen points are at least this far in normalized terms.
            let bound = nb.last().map_or(f64::INFINITY, |h| h.distance) / s(i);
            if exhausted || bound > top.0 {
                return top;
            }
            k *= 2;
        }
    };

    let mut heap = BinaryHeap::with_capacity(len);
    for i in 0..len {
        best[i] = nearest(i, &alive);
        heap.push(Reverse(Key::new(best[i].0, i)));
    }
    let mut remaining = len;
    while remaining > n {
        let Reverse(key) = heap.pop().expect("heap holds every live point");
        let i = key.index as usize;
        if !alive[i] || key.bits != best[i].0.to_bits() {
            continue;
        }
        if !alive[best[i].1] {
            // Deletions only lengthen distances; re-queue with the fresh key.
            best[i] = nearest(i, &alive);
            heap.push(Reverse(Key::new(best[i].0, i)));
            continue;
        }
        alive[i] = false;
        remaining -= 1;
    }
    Ok((0..len).filter(|&i| alive[i]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub k: usize,
    pub iterations: usize,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig {
            k: DEFAULT_SMOOTH_K,
            iterations: DEFAULT_SMOOTH_ITERATIONS,
        }
    }
}

/// Per-pass bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PassStats {
    pub moved: usize,
    pub frozen_open: usize,
    pub frozen_edge: usize,
    pub frozen_degenerate: usize,
    pub max_displacement: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointUpdate {
    Moved,
    FrozenOpen,
    FrozenEdge,
    FrozenDegenerate,
}

/// New position of point `i` from the pass snapshot held by `index`.
pub fn update_point(
    index: &SpatialIndex,
    i: usize,
    k: usize,
    classes: Option<&[PointClass]>,
) -> Result<(Point3, PointUpdate)> {
    let p = index.point(i);
    let ids: Vec<usize> = index.knn_of(i, k)?.iter().map(|n| n.index).collect();
    if let Some(c) = classes {
        if edge_freeze_predicate(i, c, &ids) {
            return Ok((p, PointUpdate::FrozenEdge));
        }
    }
    let tn = match neighborhood_from(index, i, &ids) {
        Ok(tn) => tn,
        Err(Error::DegenerateNeighborhood | Error::DegenerateProjection) => {
            return Ok((p, PointUpdate::FrozenDegenerate))
        }
        Err(e) => return Err(e),
    };
    if !tn.cell_closed {
        return Ok((p, PointUpdate::FrozenOpen));
    }
    let w = cotangent_weights(&tn)?;
    let q = match restricted_cell_centroid(&tn, &w) {
        Ok(q) if q.is_finite() => q,
        Ok(_) | Err(Error::DegenerateProjection) => return Ok((p, PointUpdate::FrozenDegenerate)),
        Err(e) => return Err(e),
    };
    Ok((q, PointUpdate::Moved))
}

/// One Jacobi pass: every new position is computed from `points`, then all
/// are returned together.
pub fn smooth_pass(
    points: &[Point3],
    k: usize,
    classes: Option<&[PointClass]>,
) -> Result<(Vec<Point3>, PassStats)> {
    if points.len() < k + 1 {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            available: points.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if let Some(c) = classes {
        if c.len() != points.len() {
            return Err(Error::LabelCountMismatch {
                labels: c.len(),
                points: points.len(),
            });
        }
    }
    let index = SpatialIndex::build(points)?;
    let updates: Vec<(Point3, PointUpdate)> = (0..points.len())
        .into_par_iter()
        .map(|i| update_point(&index, i, k, classes))
        .collect::<Result<_>>()?;

    let mut stats = PassStats::default();
    let mut out = Vec::with_capacity(points.len());
    for (i, (q, u)) in updates.into_iter().enumerate() {
        match u {
            PointUpdate::Moved => {
                stats.moved += 1;
                stats.max_displacement = stats.max_displacement.max(q.distance(points[i]));
            }
            PointUpdate::FrozenOpen => stats.frozen_open += 1,
            PointUpdate::FrozenEdge => stats.frozen_edge += 1,
            PointUpdate::FrozenDegenerate => stats.frozen_degenerate += 1,
        }
        out.push(q);
    }
    Ok((out, stats))
}

/// Runs `config.iterations` passes over the cloud. Edge protection applies
/// when the cloud carries classes. Count, order and attributes are kept.
pub fn smooth(cloud: &PointCloud, config: &SmoothConfig) -> Result<(PointCloud, Vec<PassStats>)> {
    cloud.validate()?;
    if cloud.len() < config.k + 1 {
        return Err(Error::InsufficientPoints {
            needed: config.k + 1,
            available: cloud.len(),
        });
    }
    let classes = cloud.classes.as_deref();
    let mut points = cloud.points.clone();
    let mut stats = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let (next, s) = smooth_pass(&points, config.k, classes)?;
        points = next;
        stats.push(s);
    }
    let mut out = cloud.clone();
    out.points = points;
    Ok((out, stats))
}

/// Moves every point onto its nearest point of `original` (lower index on
/// ties). Returns the number of points that changed position.
pub fn snap_back(cloud: &mut PointCloud, original: &[Point3]) -> Result<usize> {
    let index = SpatialIndex::build(original)?;
    let snapped: Vec<Point3> = cloud
        .points
        .par_iter()
        .map(|&p| index.knn(p, 1, None).map(|nb| original[nb[0].index]))
        .collect::<Result<_>>()?;
    let mut changed = 0;
    for (p, q) in cloud.points.iter_mut().zip(snapped) {
        if *p != q {
            changed += 1;
            *p = q;
        }
    }
    Ok(changed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use crate::tangent::estimate_normal;
    use proptest::prelude::*;

    /// Brute-force deletion loop straight from the rule.
    fn trim_oracle(points: &[Point3], n: usize) -> Vec<usize> {
        let mut alive: Vec<usize> = (0..points.len()).collect();
        while alive.len() > n {
            let mut pick = (f64::INFINITY, usize::MAX);
            for &i in &alive {
                let d = alive
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| points[i].distance(points[j]))
                    .fold(f64::INFINITY, f64::min);
                if d < pick.0 {
                    pick = (d, i);
                }
            }
            alive.retain(|&i| i != pick.1);
        }
        alive
    }

    fn min_pairwise(points: &[Point3]) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                m = m.min(points[i].distance(points[j]));
            }
        }
        m
    }

    /// Spread of mean 6-NN distances over points whose 6-NN sit on all sides.
    fn interior_d_local(points: &[Point3], interior: &[usize]) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in interior {
            let mut d: Vec<f64> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| points[i].distance(points[j]))
                .collect();
            d.sort_by(f64::total_cmp);
            let m = d[..6].iter().sum::<f64>() / 6.0;
            lo = lo.min(m);
            hi = hi.max(m);
        }
        hi - lo
    }

    #[test]
    fn trim_identity() {
        let cloud = synth::plane(50, 1.0, 1);
        assert_eq!(trim_to_exact_count(&cloud, 50).unwrap(), cloud);
    }

    #[test]
    fn trim_collinear_example() {
        let pts: Vec<Point3> = [0.0, 0.1, 1.0, 2.0].iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect();
        let out = trim_to_exact_count(&PointCloud::from_points(pts), 3).unwrap();
        let xs: Vec<f64> = out.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.1, 1.0, 2.0]);
    }

    #[test]
    fn trim_below_input_fails() {
        let cloud = synth::plane(5, 1.0, 1);
        assert!(matches!(
            trim_to_exact_count(&cloud, 6),
            Err(Error::CannotTrim { target: 6, available: 5 })
        ));
    }

    #[test]
    fn trim_grid_keeps_separation() {
        let grid = synth::jittered_grid(20, 20, 1.0, 0.0, 0.0, 0);
        let before = min_pairwise(&grid.points);
        for n in [390, 350, 300, 200] {
            let out = trim_to_exact_count(&grid, n).unwrap();
            assert_eq!(out.len(), n);
            assert!(min_pairwise(&out.points) >= before);
        }
    }

    #[test]
    fn trim_matches_oracle() {
        for seed in 0..6 {
            let cloud = synth::plane(150, 1.0, seed);
            let keep = trim_indices(&cloud.points, 110, None).unwrap();
            assert_eq!(keep, trim_oracle(&cloud.points, 110));
        }
        let grid = synth::jittered_grid(8, 8, 1.0, 0.0, 0.0, 0);
        assert_eq!(
            trim_indices(&grid.points, 50, None).unwrap(),
            trim_oracle(&grid.points, 50)
        );
    }

    #[test]
    fn scaled_trim_spares_dense_points() {
        // A dense row with half scale next to a sparse row with full scale.
        let mut pts = Vec::new();
        let mut scale = Vec::new();
        for i in 0..20 {
            pts.push(Point3::new(i as f64 * 0.5, 0.0, 0.0));
            scale.push(0.5);
        }
        for i in 0..10 {
            pts.push(Point3::new(i as f64 * 0.9, 5.0, 0.0));
            scale.push(1.0);
        }
        let keep = trim_indices(&pts, 27, Some(&scale)).unwrap();
        assert_eq!(keep.iter().filter(|&&i| i < 20).count(), 20);
        let plain = trim_indices(&pts, 27, None).unwrap();
        assert_eq!(plain.iter().filter(|&&i| i < 20).count(), 20 - 3);
    }

    #[test]
    fn scaled_trim_prefers_normalized_distance() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.3, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(5.4, 0.0, 0.0),
        ];
        let scale = [0.5, 0.5, 1.0, 1.0];
        // Normalized: 0.3 / 0.5 = 0.6 vs 0.4 / 1.0 = 0.4.
        assert_eq!(trim_indices(&pts, 3, Some(&scale)).unwrap(), vec![0, 1, 3]);
        assert_eq!(trim_indices(&pts, 3, None).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn jittered_grid_gets_more_uniform() {
        let cloud = synth::jittered_grid(30, 30, 1.0, 0.2, 0.0, 42);
        let interior: Vec<usize> = (0..cloud.len())
            .filter(|&i| {
                let (x, y) = (i % 30, i / 30);
                (3..27).contains(&x) && (3..27).contains(&y)
            })
            .collect();
        let before = interior_d_local(&cloud.points, &interior);
        let (out, stats) = smooth(&cloud, &SmoothConfig { k: 8, iterations: 5 }).unwrap();
        let after = interior_d_local(&out.points, &interior);
        assert!(after <= 0.7 * before, "{before} -> {after} {stats:?}");
        assert_eq!(stats.len(), 5);
        assert!(stats.iter().all(|s| s.moved > 700));
    }

    #[test]
    fn regular_grid_is_a_fixpoint() {
        let cloud = synth::hex_lattice(12, 12);
        let (out, _) = smooth(&cloud, &SmoothConfig { k: 6, iterations: 1 }).unwrap();
        for (i, (a, b)) in cloud.points.iter().zip(&out.points).enumerate() {
            let (r, c) = (i / 12, i % 12);
            if (2..10).contains(&r) && (2..10).contains(&c) {
                assert!(a.distance(*b) < 1e-9, "point {i} moved");
            }
        }
    }

    #[test]
    fn all_edge_cloud_is_smoothed() {
        let mut cloud = synth::jittered_grid(12, 12, 1.0, 0.2, 0.0, 5);
        cloud.classes = Some(vec![PointClass::Edge; cloud.len()]);
        let (_, stats) = smooth(&cloud, &SmoothConfig { k: 8, iterations: 1 }).unwrap();
        assert_eq!(stats[0].frozen_edge, 0);
        assert!(stats[0].moved > 0);
    }

    #[test]
    fn mixed_edges_are_protected() {
        let mut cloud = synth::jittered_grid(12, 12, 1.0, 0.2, 0.0, 5);
        let classes: Vec<PointClass> = (0..cloud.len())
            .map(|i| if i % 12 == 6 { PointClass::Edge } else { PointClass::Normal })
            .collect();
        cloud.classes = Some(classes.clone());
        let (out, stats) = smooth(&cloud, &SmoothConfig { k: 8, iterations: 2 }).unwrap();
        for i in (0..cloud.len()).filter(|&i| classes[i] == PointClass::Edge) {
            assert_eq!(out.points[i], cloud.points[i]);
        }
        assert_eq!(stats[0].frozen_edge, 12);
    }

    #[test]
    fn open_cells_stay_bitwise_identical() {
        let cloud = synth::jittered_grid(10, 10, 1.0, 0.15, 0.0, 9);
        let index = SpatialIndex::build(&cloud.points).unwrap();
        let (next, _) = smooth_pass(&cloud.points, 8, None).unwrap();
        for i in 0..cloud.len() {
            let (_, u) = update_point(&index, i, 8, None).unwrap();
            if u == PointUpdate::FrozenOpen {
                assert_eq!(next[i].to_array().map(f64::to_bits), cloud.points[i].to_array().map(f64::to_bits));
            }
        }
    }

    #[test]
    fn displacement_stays_on_tangent_plane() {
        let cloud = synth::sphere(3000, 1.0, 3);
        let index = SpatialIndex::build(&cloud.points).unwrap();
        let (next, _) = smooth_pass(&cloud.points, 16, None).unwrap();
        for i in 0..cloud.len() {
            let ids: Vec<usize> = index.knn_of(i, 16).unwrap().iter().map(|n| n.index).collect();
            let mut nb = vec![cloud.points[i]];
            nb.extend(ids.iter().map(|&j| cloud.points[j]));
            let normal = estimate_normal(&nb).unwrap();
            let off = next[i] - cloud.points[i];
            assert!(off.dot(normal).abs() < 1e-7);
        }
    }

    #[test]
    fn new_position_lies_in_neighbor_hull() {
        let cloud = synth::plane(1500, 1.0, 4);
        let index = SpatialIndex::build(&cloud.points).unwrap();
        let (next, _) = smooth_pass(&cloud.points, 10, None).unwrap();
        for i in 0..cloud.len() {
            if update_point(&index, i, 10, None).unwrap().1 != PointUpdate::Moved {
                continue;
            }
            let ids: Vec<usize> = index.knn_of(i, 10).unwrap().iter().map(|n| n.index).collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = ids.iter().map(|&j| (cloud.points[j].x, cloud.points[j].y)).unzip();
            let q = next[i];
            let fold = |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            let (x0, x1) = fold(&xs);
            let (y0, y1) = fold(&ys);
            assert!(
                q.x >= x0 - 1e-12 && q.x <= x1 + 1e-12 && q.y >= y0 - 1e-12 && q.y <= y1 + 1e-12,
                "{i}: {q:?} outside [{x0}, {x1}] x [{y0}, {y1}]"
            );
        }
    }

    #[test]
    fn rigid_motion_commutes_with_a_pass() {
        let cloud = synth::jittered_grid(15, 15, 1.0, 0.2, 0.0, 13);
        let (a, b, c) = (0.3f64, -0.5f64, 0.2f64);
        // Rotation keeps the normal in the upper half space so the sign rule
        // agrees before and after.
        let rot = |p: Point3| {
            let (ca, sa) = (a.cos(), a.sin());
            let (cb, sb) = (b.cos(), b.sin());
            let p1 = Point3::new(ca * p.x - sa * p.y, sa * p.x + ca * p.y, p.z);
            let p2 = Point3::new(p1.x, cb * p1.y - sb * p1.z, sb * p1.y + cb * p1.z);
            p2 + Point3::new(c, 2.0, -1.0)
        };
        let moved: Vec<Point3> = cloud.points.iter().map(|&p| rot(p)).collect();
        let (x, _) = smooth_pass(&cloud.points, 8, None).unwrap();
        let (y, _) = smooth_pass(&moved, 8, None).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!(rot(*p).distance(*q) < 1e-6);
        }
    }

    #[test]
    fn snap_back_lands_on_original() {
        let original = synth::plane(500, 1.0, 2);
        let mut cloud = original.select(&(0..100).collect::<Vec<_>>());
        for p in &mut cloud.points {
            p.x += 1e-4;
        }
        let changed = snap_back(&mut cloud, &original.points).unwrap();
        assert_eq!(changed, 100);
        for p in &cloud.points {
            assert!(original.points.contains(p));
        }
    }

    #[test]
    fn too_few_points_for_k() {
        let cloud = synth::plane(10, 1.0, 1);
        assert!(smooth(&cloud, &SmoothConfig { k: 16, iterations: 1 }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn smoothing_preserves_count(seed in 0u64..500, iters in 0usize..3) {
            let cloud = synth::sphere(300, 1.0, seed);
            let (out, stats) = smooth(&cloud, &SmoothConfig { k: 10, iterations: iters }).unwrap();
            prop_assert_eq!(out.len(), cloud.len());
            prop_assert_eq!(stats.len(), iters);
        }

        #[test]
        fn trimming_matches_oracle(seed in 0u64..500, drop in 1usize..30) {
            let cloud = synth::plane(80, 1.0, seed);
            let keep = trim_indices(&cloud.points, 80 - drop, None).unwrap();
            prop_assert_eq!(keep, trim_oracle(&cloud.points, 80 - drop));
        }
    }
}
