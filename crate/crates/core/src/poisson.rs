//! Initial Poisson resampling.
//!
//! The disk radius comes from a voxel estimate of the surface area,
//! `r = l_v * sqrt(m / (lambda * n * pi))`, and is then refined until the
//! dart-throwing subset lands in `n ..= 1.05 n`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::cloud::{BoundingBox, Point3, PointCloud, VoxelGrid};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;

/// Overlap decay factor between neighboring disks.
pub const DEFAULT_LAMBDA: f64 = 0.68;
pub const THETA1: f64 = 1.8;
pub const THETA2: f64 = 3.0;
pub const DEFAULT_TOLERANCE: f64 = 0.05;
pub const DEFAULT_MAX_REFINE_ITERS: usize = 50;

/// Half the surface area of the bounding box, `lh + wh + lw`.
pub fn estimate_area_bbox(bbox: &BoundingBox) -> f64 {
    let [l, w, h] = bbox.extents();
    l * h + w * h + l * w
}

/// One voxel face per occupied voxel, `m * l_v^2`.
pub fn estimate_area_voxel(grid: &VoxelGrid) -> f64 {
    grid.m() as f64 * grid.l_v * grid.l_v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub r: f64,
    /// Estimated surface area `m * l_v^2`.
    pub area: f64,
    pub lambda: f64,
    pub m: usize,
    pub l_v: f64,
    pub n: usize,
}

pub fn estimate_radius(grid: &VoxelGrid, n: usize, lambda: f64) -> Result<RadiusEstimate> {
    if n == 0 {
        return Err(Error::NonPositiveTarget);
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    if grid.m() == 0 {
        return Err(Error::EmptyInput);
    }
    let m = grid.m() as f64;
    Ok(RadiusEstimate {
        r: grid.l_v * (m / (lambda * n as f64 * std::f64::consts::PI)).sqrt(),
        area: estimate_area_voxel(grid),
        lambda,
        m: grid.m(),
        l_v: grid.l_v,
        n,
    })
}

/// Dart throwing over the input points in a seeded random order.
///
/// A candidate `p` is rejected when some already accepted `q` lies strictly
/// closer than `min(radius(p), radius(q))`. The permutation depends only on
/// the point count and the seed, so repeated runs with different radii visit
/// points in the same order.
#[derive(Debug, Clone)]
pub struct DartThrower {
    order: Vec<u32>,
}

impl DartThrower {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut order: Vec<u32> = (0..len as u32).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        DartThrower { order }
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Accepted point indices, ascending.
    pub fn run(&self, points: &[Point3], radius: impl Fn(usize) -> f64) -> Result<Vec<usize>> {
        assert_eq!(points.len(), self.order.len());
        let mut cell = 0.0f64;
        for i in 0..points.len() {
            let r = radius(i);
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidRadius(r));
            }
            cell = cell.max(r);
        }
        let inv = 1.0 / cell;
        let key = |p: Point3| {
            [
                (p.x * inv).floor() as i64,
                (p.y * inv).floor() as i64,
                (p.z * inv).floor() as i64,
            ]
        };

        // Accepted points are chained per cell: `head[cell]` -> `next[..]`.
        let mut head: FxHashMap<[i64; 3], u32> = FxHashMap::default();
        let mut next: Vec<u32> = Vec::new();
        let mut accepted: Vec<u32> = Vec::new();
        const NIL: u32 = u32::MAX;

        for &i in &self.order {
            let p = points[i as usize];
            let rp = radius(i as usize);
            let c = key(p);
            let mut ok = true;
            'scan: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(&h) = head.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                            continue;
                        };
                        let mut slot = h;
                        while slot != NIL {
                            let j = accepted[slot as usize] as usize;
                            let lim = rp.min(radius(j));
                            if points[j].distance_squared(p) < lim * lim {
                                ok = false;
                                break 'scan;
                            }
                            slot = next[slot as usize];
                        }
                    }
                }
            }
            if ok {
                let slot = accepted.len() as u32;
                accepted.push(i);
                let prev = head.insert(c, slot).unwrap_or(NIL);
                next.push(prev);
            }
        }
        let mut out: Vec<usize> = accepted.into_iter().map(|i| i as usize).collect();
        out.sort_unstable();
        Ok(out)
    }
}

/// Poisson-disk subset of `cloud` under a per-point radius.
pub fn poisson_disk_subsample(
    cloud: &PointCloud,
    radius_of: impl Fn(usize) -> f64,
    seed: u64,
) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    let idx = DartThrower::new(cloud.len(), seed).run(&cloud.points, radius_of)?;
    Ok(cloud.select(&idx))
}

/// `R_n = 1 - |P'| / n`.
pub fn relative_count_error(count: usize, n: usize) -> f64 {
    1.0 - count as f64 / n as f64
}

/// Radius update for one refinement step, or `None` when `count` is already
/// inside the accepted band (`-tolerance <= R_n <= 0`).
///
/// Too few points shrink the radius by `R_n / theta1`; too many grow it by
/// `-R_n / (theta2 + mu)` with `mu = (|P'| - n) / 2`.
pub fn next_radius(r: f64, count: usize, n: usize, tolerance: f64) -> Option<f64> {
    let rn = relative_count_error(count, n);
    if rn > 0.0 {
        Some(r * (1.0 - rn / THETA1))
    } else if count > band_upper(n, tolerance) {
        let mu = (count as f64 - n as f64) / 2.0;
        Some(r * (1.0 - rn / (THETA2 + mu)))
    } else {
        None
    }
}

/// Largest accepted count, `ceil((1 + tolerance) n)`, immune to rounding
/// noise when `(1 + tolerance) n` is an integer.
pub fn band_upper(n: usize, tolerance: f64) -> usize {
    let x = n as f64 * (1.0 + tolerance);
    let near = x.round();
    if (x - near).abs() <= 1e-9 * x.max(1.0) {
        near as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementState {
    /// Radius used for the final sampling pass.
    pub r: f64,
    /// Relative count error of the final pass.
    pub r_n: f64,
    /// Number of sampling passes run.
    pub iteration: usize,
    pub theta1: f64,
    pub theta2: f64,
    /// `(|P'| - n) / 2` of the final pass.
    pub mu: f64,
    /// `(radius, count)` for every pass, in order.
    pub history: Vec<(f64, usize)>,
}

/// How the refinement loop grows the radius when there are too many points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverCountStep {
    /// [`next_radius`] only. Because `mu` is measured in points, the step
    /// shrinks like `2 / n` and large targets can stall far above the band.
    Literal,
    /// The larger of [`next_radius`] and the area-law step
    /// `r * sqrt(|P'| / ((1 + tol / 2) n))`, which aims at the band center.
    #[default]
    AreaSafeguard,
}

#[derive(Debug, Clone)]
pub struct RefineOptions<'a> {
    pub seed: u64,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Per-point radius multipliers (0.5 for edge points in sharp mode).
    /// The refined radius scales all of them together.
    pub radius_scale: Option<&'a [f64]>,
    pub over_step: OverCountStep,
}

impl Default for RefineOptions<'_> {
    fn default() -> Self {
        RefineOptions {
            seed: 0,
            max_iters: DEFAULT_MAX_REFINE_ITERS,
            tolerance: DEFAULT_TOLERANCE,
            radius_scale: None,
            over_step: OverCountStep::default(),
        }
    }
}

/// Iterates sampling and radius updates until `n <= |P'| <= (1 + tol) n`.
///
/// On non-convergence the error carries the pass whose count was closest to
/// `n`.
pub fn refine_count(
    cloud: &PointCloud,
    n: usize,
    estimate: &RadiusEstimate,
    opts: &RefineOptions<'_>,
) -> Result<(PointCloud, RefinementState)> {
    let out = refine_indices(&cloud.points, n, estimate.r, opts)?;
    let subset = cloud.select(&out.indices);
    if out.converged {
        Ok((subset, out.state))
    } else {
        Err(Error::NonConvergence {
            iterations: out.state.history.len(),
            best_count: subset.len(),
            target: n,
            best: Box::new((subset, out.state)),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    /// Accepted indices, ascending. The closest-count pass when not converged.
    pub indices: Vec<usize>,
    pub state: RefinementState,
    pub converged: bool,
}

/// Index-level form of [`refine_count`]. Non-convergence is reported through
/// [`RefineOutcome::converged`] rather than as an error.
pub fn refine_indices(
    points: &[Point3],
    n: usize,
    r0: f64,
    opts: &RefineOptions<'_>,
) -> Result<RefineOutcome> {
    if n == 0 {
        return Err(Error::NonPositiveTarget);
    }
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n > points.len() {
        return Err(Error::TargetExceedsInput {
            target: n,
            available: points.len(),
        });
    }
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::InvalidRadius(r0));
    }
    if let Some(s) = opts.radius_scale {
        if s.len() != points.len() {
            return Err(Error::InvalidConfig("radius scale length mismatch".into()));
        }
    }
    if !(opts.tolerance > 0.0 && opts.tolerance < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be in (0, 1), got {}",
            opts.tolerance
        )));
    }

    let thrower = DartThrower::new(points.len(), opts.seed);
    let scale = |i: usize| opts.radius_scale.map_or(1.0, |s| s[i]);
    let mut history: Vec<(f64, usize)> = Vec::new();
    let mut best: Option<Vec<usize>> = None;
    let mut best_r = r0;
    // Keeping every point needs a radius no larger than the closest pair.
    let mut r = if n == points.len() {
        full_keep_radius(points, opts.radius_scale)?.unwrap_or(r0)
    } else {
        r0
    };

    let state_for = |r: f64, count: usize, history: &[(f64, usize)]| RefinementState {
        r,
        r_n: relative_count_error(count, n),
        iteration: history.len(),
        theta1: THETA1,
        theta2: THETA2,
        mu: (count as f64 - n as f64) / 2.0,
        history: history.to_vec(),
    };

    for _ in 0..opts.max_iters.max(1) {
        let idx = thrower.run(points, |i| r * scale(i))?;
        let count = idx.len();
        history.push((r, count));
        match next_radius(r, count, n, opts.tolerance) {
            None => {
                return Ok(RefineOutcome {
                    state: state_for(r, count, &history),
                    indices: idx,
                    converged: true,
                })
            }
            Some(next) => {
                if best.as_ref().is_none_or(|b| count.abs_diff(n) < b.len().abs_diff(n)) {
                    best = Some(idx);
                    best_r = r;
                }
                r = match opts.over_step {
                    OverCountStep::AreaSafeguard if next > r => {
                        let target = n as f64 * (1.0 + opts.tolerance / 2.0);
                        next.max(r * (count as f64 / target).sqrt())
                    }
                    _ => next,
                };
            }
        }
    }

    let indices = best.expect("at least one pass ran");
    let mut state = state_for(best_r, indices.len(), &history);
    state.iteration = history.len();
    Ok(RefineOutcome {
        indices,
        state,
        converged: false,
    })
}

/// Largest radius at which dart throwing keeps every point, or `None` when
/// the cloud holds duplicates.
fn full_keep_radius(points: &[Point3], scale: Option<&[f64]>) -> Result<Option<f64>> {
    if points.len() < 2 {
        return Ok(None);
    }
    let index = SpatialIndex::build(points)?;
    let mut dmin = f64::INFINITY;
    for i in 0..points.len() {
        dmin = dmin.min(index.knn_of(i, 1)?[0].distance);
    }
    let smax = scale.map_or(1.0, |s| s.iter().copied().fold(0.0, f64::max));
    let r = dmin / smax;
    Ok((r > 0.0 && r.is_finite()).then_some(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::voxelize;
    use crate::synth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid_of(m: usize, l_v: f64) -> VoxelGrid {
        VoxelGrid {
            l_v,
            origin: Point3::ZERO,
            dims: [m as i64, 1, 1],
            occupied: (0..m as i64).map(|i| [i, 0, 0]).collect(),
        }
    }

    fn brute_check(points: &[Point3], accepted: &[usize], radius: impl Fn(usize) -> f64) {
        for (a, &i) in accepted.iter().enumerate() {
            for &j in &accepted[a + 1..] {
                let lim = radius(i).min(radius(j));
                assert!(points[i].distance(points[j]) >= lim, "{i} and {j} too close");
            }
        }
        let mut is_acc = vec![false; points.len()];
        for &i in accepted {
            is_acc[i] = true;
        }
        for (p, _) in points.iter().enumerate().filter(|(i, _)| !is_acc[*i]) {
            let covered = accepted
                .iter()
                .any(|&j| points[p].distance(points[j]) < radius(p).min(radius(j)));
            assert!(covered, "rejected point {p} is not covered");
        }
    }

    #[test]
    fn bbox_area() {
        let b = |e: [f64; 3]| BoundingBox {
            min: Point3::ZERO,
            max: Point3::from_array(e),
        };
        assert_eq!(estimate_area_bbox(&b([1.0, 1.0, 1.0])), 3.0);
        assert_eq!(estimate_area_bbox(&b([2.0, 3.0, 4.0])), 26.0);
        assert_eq!(estimate_area_bbox(&b([1.0, 1.0, 0.0])), 1.0);
    }

    #[test]
    fn voxel_area() {
        assert!((estimate_area_voxel(&grid_of(100, 0.1)) - 1.0).abs() < 1e-12);
        assert_eq!(estimate_area_voxel(&grid_of(1, 2.0)), 4.0);
    }

    #[test]
    fn unit_square_voxel_area() {
        let cloud = synth::jittered_grid(100, 100, 0.01, 0.004, 0.05, 3);
        let mut cloud = cloud;
        for p in &mut cloud.points {
            p.x += 0.005;
            p.y += 0.005;
        }
        let grid = voxelize(&cloud, 0.1).unwrap();
        assert_eq!(grid.m(), 100);
        assert!((estimate_area_voxel(&grid) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radius_examples() {
        let e = estimate_radius(&grid_of(1000, 1.0), 1000, 0.68).unwrap();
        assert!((e.r - 0.684_18).abs() < 1e-5);
        assert!((e.r - (1.0 / (0.68 * std::f64::consts::PI)).sqrt()).abs() < 1e-15);
        let e = estimate_radius(&grid_of(50, 0.3), 50, 1.0 / std::f64::consts::PI).unwrap();
        assert!((e.r - 0.3).abs() < 1e-15);
        let a = estimate_radius(&grid_of(40, 1.0), 100, 0.68).unwrap().r;
        let b = estimate_radius(&grid_of(40, 1.0), 400, 0.68).unwrap().r;
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(matches!(
            estimate_radius(&grid_of(4, 1.0), 0, 0.68),
            Err(Error::NonPositiveTarget)
        ));
    }

    #[test]
    fn radius_matches_independent_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let m = rng.random_range(1..5000usize);
            let l_v = rng.random_range(1e-3..10.0);
            let n = rng.random_range(1..100_000usize);
            let lambda = rng.random_range(0.05..2.0);
            let e = estimate_radius(&grid_of(m, l_v), n, lambda).unwrap();
            let expect = l_v * ((m as f64) / (lambda * n as f64 * std::f64::consts::PI)).sqrt();
            assert!(((e.r - expect) / expect).abs() <= 1e-12);
            assert!(((e.area - m as f64 * l_v * l_v) / e.area).abs() <= 1e-12);
        }
    }

    #[test]
    fn refinement_step_examples() {
        let r = next_radius(1.0, 950, 1000, 0.05).unwrap();
        assert!((r - 0.972_222).abs() < 1e-6);
        let r = next_radius(1.0, 1100, 1000, 0.05).unwrap();
        assert!((r - 1.001_886_8).abs() < 1e-7);
        assert_eq!(next_radius(1.0, 1000, 1000, 0.05), None);
        assert_eq!(next_radius(1.0, 1050, 1000, 0.05), None);
        assert!(next_radius(1.0, 1051, 1000, 0.05).is_some());
        assert_eq!(band_upper(1000, 0.05), 1050);
        assert_eq!(band_upper(5000, 0.05), 5250);
        assert_eq!(band_upper(999, 0.05), 1049);
    }

    #[test]
    fn two_point_cases() {
        let pts = vec![Point3::ZERO, Point3::new(0.5, 0.0, 0.0)];
        let t = DartThrower::new(2, 9);
        let one = t.run(&pts, |_| 1.0).unwrap();
        assert_eq!(one, vec![t.order()[0] as usize]);
        assert_eq!(t.run(&pts, |_| 0.4).unwrap(), vec![0, 1]);
    }

    #[test]
    fn separation_and_maximality_oracle() {
        let cloud = synth::plane(2000, 1.0, 5);
        let idx = DartThrower::new(cloud.len(), 1).run(&cloud.points, |_| 0.05).unwrap();
        brute_check(&cloud.points, &idx, |_| 0.05);
    }

    #[test]
    fn mixed_radius_oracle() {
        let cloud = synth::dihedral(3000, 0.1, 2);
        let classes = cloud.classes.clone().unwrap();
        let radius = |i: usize| if classes[i] == crate::cloud::PointClass::Edge { 0.03 } else { 0.06 };
        let idx = DartThrower::new(cloud.len(), 4).run(&cloud.points, radius).unwrap();
        brute_check(&cloud.points, &idx, radius);
    }

    #[test]
    fn subsample_is_deterministic_subset() {
        let cloud = synth::sphere(3000, 1.0, 8);
        let a = poisson_disk_subsample(&cloud, |_| 0.1, 21).unwrap();
        let b = poisson_disk_subsample(&cloud, |_| 0.1, 21).unwrap();
        assert_eq!(a, b);
        for p in &a.points {
            assert!(cloud.points.contains(p));
        }
    }

    #[test]
    fn sphere_converges_in_band() {
        let cloud = synth::sphere(50_000, 1.0, 1);
        let grid = voxelize(&cloud, crate::cloud::default_voxel_length(&crate::cloud::compute_bbox(&cloud).unwrap()).unwrap()).unwrap();
        let est = estimate_radius(&grid, 5000, DEFAULT_LAMBDA).unwrap();
        let (out, state) = refine_count(&cloud, 5000, &est, &RefineOptions::default()).unwrap();
        assert!((5000..=5250).contains(&out.len()));
        assert!(state.iteration <= DEFAULT_MAX_REFINE_ITERS);
        assert_eq!(state.history.last().unwrap().1, out.len());
        assert!((state.r_n - relative_count_error(out.len(), 5000)).abs() < 1e-15);
    }

    #[test]
    fn history_moves_radius_the_right_way() {
        for (cloud, n) in [
            (synth::plane(40_000, 1.0, 3), 3000),
            (synth::torus(40_000, 1.0, 0.3, 3), 1000),
        ] {
            let opts = RefineOptions {
                max_iters: 50,
                ..Default::default()
            };
            // Start far off on both sides.
            for r0 in [0.2, 0.002] {
                let out = refine_indices(&cloud.points, n, r0, &opts).unwrap();
                assert!(out.converged);
                for w in out.state.history.windows(2) {
                    let ((r, c), (r2, _)) = (w[0], w[1]);
                    if c < n {
                        assert!(r2 < r);
                    } else if c as f64 > 1.05 * n as f64 {
                        assert!(r2 > r);
                    }
                }
            }
        }
    }

    #[test]
    fn literal_step_stalls_where_safeguard_converges() {
        let cloud = synth::plane(60_000, 1.0, 2);
        let grid = voxelize(&cloud, 0.05).unwrap();
        let est = estimate_radius(&grid, 5000, DEFAULT_LAMBDA).unwrap();
        let literal = RefineOptions {
            over_step: OverCountStep::Literal,
            ..Default::default()
        };
        let err = refine_count(&cloud, 5000, &est, &literal).unwrap_err();
        match err {
            Error::NonConvergence { iterations, best_count, .. } => {
                assert_eq!(iterations, 50);
                assert!(best_count > 5250);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(refine_count(&cloud, 5000, &est, &RefineOptions::default()).is_ok());
    }

    #[test]
    fn full_count_keeps_everything() {
        let cloud = synth::plane(500, 1.0, 6);
        let out = refine_indices(&cloud.points, 500, 0.3, &RefineOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.indices, (0..500).collect::<Vec<_>>());
        assert_eq!(out.state.iteration, 1);
    }

    #[test]
    fn target_too_large() {
        let cloud = synth::plane(10, 1.0, 1);
        assert!(matches!(
            refine_indices(&cloud.points, 11, 0.1, &RefineOptions::default()),
            Err(Error::TargetExceedsInput { target: 11, available: 10 })
        ));
    }

    #[test]
    fn non_convergence_carries_best() {
        let cloud = synth::plane(5000, 1.0, 1);
        let opts = RefineOptions {
            max_iters: 2,
            ..Default::default()
        };
        let out = refine_indices(&cloud.points, 1000, 0.5, &opts).unwrap();
        assert!(!out.converged);
        assert_eq!(out.state.history.len(), 2);
        let best = out.state.history.iter().map(|h| h.1.abs_diff(1000)).min().unwrap();
        assert_eq!(out.indices.len().abs_diff(1000), best);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn same_seed_same_subset(seed in 0u64..1000, r in 0.02f64..0.3) {
            let cloud = synth::plane(800, 1.0, seed ^ 0x55);
            let a = DartThrower::new(cloud.len(), seed).run(&cloud.points, |_| r).unwrap();
            let b = DartThrower::new(cloud.len(), seed).run(&cloud.points, |_| r).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn larger_n_smaller_radius(m in 1usize..1000, n in 1usize..10_000, l_v in 0.01f64..5.0) {
            let g = grid_of(m, l_v);
            let a = estimate_radius(&g, n, 0.68).unwrap().r;
            let b = estimate_radius(&g, n + 1, 0.68).unwrap().r;
            let c = estimate_radius(&grid_of(m + 1, l_v), n, 0.68).unwrap().r;
            prop_assert!(b < a);
            prop_assert!(c > a);
        }
    }
}
