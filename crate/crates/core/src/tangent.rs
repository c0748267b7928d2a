//! Tangent-plane machinery shared by smoothing and the uniformity metrics:
//! PCA normals, local frames, projection of a neighborhood to 2D, the
//! center's Voronoi cell and its cotangent weights.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::index::SpatialIndex;

/// Unit normal of a neighborhood: the covariance eigenvector with the
/// smallest eigenvalue, oriented to positive z (then y, then x on ties).
pub fn estimate_normal(points: &[Point3]) -> Result<Point3> {
    if points.len() < 3 {
        return Err(Error::DegenerateNeighborhood);
    }
    let eig = SymmetricEigen::new(covariance(points));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l1, l2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    // Collinear or coincident points leave the plane undetermined.
    if !(l2 > 0.0) || l1 <= l2 * 1e-12 {
        return Err(Error::DegenerateNeighborhood);
    }
    let v = eig.eigenvectors.column(order[0]);
    let n = Point3::new(v[0], v[1], v[2])
        .normalized()
        .ok_or(Error::DegenerateNeighborhood)?;
    Ok(orient(n))
}

/// Unnormalized covariance (scatter matrix) about the centroid.
pub(crate) fn covariance(points: &[Point3]) -> Matrix3<f64> {
    let centroid = points.iter().fold(Point3::ZERO, |a, &p| a + p) / points.len() as f64;
    let mut cov = Matrix3::<f64>::zeros();
    for &p in points {
        let d = p - centroid;
        let v = [d.x, d.y, d.z];
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += v[r] * v[c];
            }
        }
    }
    cov
}

fn orient(n: Point3) -> Point3 {
    const EPS: f64 = 1e-12;
    let flip = if n.z.abs() > EPS {
        n.z < 0.0
    } else if n.y.abs() > EPS {
        n.y < 0.0
    } else {
        n.x < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

/// Orthonormal frame `{e1, e2, normal}` anchored at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin: Point3,
    pub normal: Point3,
    pub e1: Point3,
    pub e2: Point3,
}

impl LocalFrame {
    /// `normal` must be unit length. The tangent basis is derived from the
    /// coordinate axis least aligned with the normal.
    pub fn new(origin: Point3, normal: Point3) -> Self {
        let a = [normal.x.abs(), normal.y.abs(), normal.z.abs()];
        let axis = if a[0] <= a[1] && a[0] <= a[2] {
            Point3::new(1.0, 0.0, 0.0)
        } else if a[1] <= a[2] {
            Point3::new(0.0, 1.0, 0.0)
        } else {
            Point3::new(0.0, 0.0, 1.0)
        };
        let e1 = (axis - normal * axis.dot(normal))
            .normalized()
            .expect("helper axis is never parallel to the normal");
        let e2 = normal.cross(e1);
        LocalFrame {
            origin,
            normal,
            e1,
            e2,
        }
    }

    #[inline]
    pub fn project(&self, q: Point3) -> [f64; 2] {
        let d = q - self.origin;
        [d.dot(self.e1), d.dot(self.e2)]
    }

    #[inline]
    pub fn lift(&self, uv: [f64; 2]) -> Point3 {
        self.origin + self.e1 * uv[0] + self.e2 * uv[1]
    }
}

/// A center point and its neighbors mapped onto the center's tangent plane.
/// The center sits at the 2D origin.
#[derive(Debug, Clone)]
pub struct TangentNeighborhood {
    pub frame: LocalFrame,
    pub neighbors2d: Vec<[f64; 2]>,
    /// Caller-supplied ids, parallel to `neighbors2d`.
    pub neighbor_ids: Vec<usize>,
    /// Positions in `neighbors2d` of the center's Delaunay neighbors, in
    /// counter-clockwise order. Empty unless the cell is closed.
    pub star: Vec<usize>,
    /// The center's Voronoi cell, counter-clockwise. Empty unless closed.
    pub cell: Vec<[f64; 2]>,
    /// Whether the center lies strictly inside the convex hull of the
    /// projected neighbors, i.e. its Voronoi cell is bounded.
    pub cell_closed: bool,
}

impl TangentNeighborhood {
    pub fn center2d(&self) -> [f64; 2] {
        [0.0, 0.0]
    }

    /// Area of the center's Voronoi cell, `None` when the cell is open.
    pub fn cell_area(&self) -> Option<f64> {
        self.cell_closed.then(|| polygon_area(&self.cell))
    }
}

#[inline]
fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n).map(|i| cross2(poly[i], poly[(i + 1) % n])).sum();
    0.5 * twice.abs()
}

/// Maps `neighbors` onto the tangent plane of `frame`, then builds the
/// center's Voronoi cell and Delaunay star when the cell is closed.
pub fn project_to_tangent(
    center: Point3,
    neighbors: &[Point3],
    neighbor_ids: &[usize],
    frame: &LocalFrame,
) -> Result<TangentNeighborhood> {
    debug_assert_eq!(neighbors.len(), neighbor_ids.len());
    let mut frame = *frame;
    frame.origin = center;
    let pts: Vec<[f64; 2]> = neighbors.iter().map(|&q| frame.project(q)).collect();
    if !spans_plane(&pts) {
        return Err(Error::DegenerateProjection);
    }
    let closed = strictly_inside_hull(&pts);
    let mut tn = TangentNeighborhood {
        frame,
        neighbors2d: pts,
        neighbor_ids: neighbor_ids.to_vec(),
        star: Vec::new(),
        cell: Vec::new(),
        cell_closed: false,
    };
    if closed {
        if let Some((cell, star)) = voronoi_cell(&tn.neighbors2d) {
            tn.cell = cell;
            tn.star = star;
            tn.cell_closed = true;
        }
    }
    Ok(tn)
}

/// At least three points that are not collinear.
fn spans_plane(pts: &[[f64; 2]]) -> bool {
    if pts.len() < 3 {
        return false;
    }
    let scale = pts.iter().map(|p| dot2(*p, *p)).fold(0.0, f64::max);
    if scale == 0.0 {
        return false;
    }
    let a = pts[0];
    let Some(b) = pts.iter().copied().max_by(|p, q| {
        dot2(sub2(*p, a), sub2(*p, a)).total_cmp(&dot2(sub2(*q, a), sub2(*q, a)))
    }) else {
        return false;
    };
    let ab = sub2(b, a);
    pts.iter()
        .any(|&p| cross2(ab, sub2(p, a)).abs() > 1e-12 * scale)
}

/// True iff the origin lies strictly inside the convex hull of `pts`:
/// every angular gap between consecutive neighbors is below pi.
fn strictly_inside_hull(pts: &[[f64; 2]]) -> bool {
    let mut dirs: Vec<[f64; 2]> = pts.iter().copied().filter(|p| dot2(*p, *p) > 0.0).collect();
    if dirs.len() < 3 {
        return false;
    }
    dirs.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
    (0..dirs.len()).all(|i| {
        let a = dirs[i];
        let b = dirs[(i + 1) % dirs.len()];
        let c = cross2(a, b);
        c > 0.0 || (c == 0.0 && dot2(a, b) > 0.0)
    })
}

/// Bounded Voronoi cell of the origin against `pts` by half-plane clipping.
/// Returns the CCW polygon and the CCW list of neighbors owning its edges,
/// or `None` if the clipping box survives (a sliver too thin to resolve).
fn voronoi_cell(pts: &[[f64; 2]]) -> Option<(Vec<[f64; 2]>, Vec<usize>)> {
    let reach = pts.iter().map(|p| dot2(*p, *p)).fold(0.0, f64::max).sqrt();
    let b = reach * 1e6;
    // (vertex, owner of the edge starting at this vertex); None = box edge.
    let mut poly: Vec<([f64; 2], Option<usize>)> =
        vec![([-b, -b], None), ([b, -b], None), ([b, b], None), ([-b, b], None)];
    let mut next = Vec::with_capacity(pts.len() + 4);
    for (j, &q) in pts.iter().enumerate() {
        let c = 0.5 * dot2(q, q);
        if c == 0.0 {
            continue;
        }
        next.clear();
        let m = poly.len();
        for i in 0..m {
            let (a, la) = poly[i];
            let (bv, _) = poly[(i + 1) % m];
            let da = dot2(a, q) - c;
            let db = dot2(bv, q) - c;
            let a_in = da <= 0.0;
            let b_in = db <= 0.0;
            if a_in {
                next.push((a, la));
            }
            if a_in != b_in {
                let t = da / (da - db);
                let x = [a[0] + (bv[0] - a[0]) * t, a[1] + (bv[1] - a[1]) * t];
                next.push((x, if a_in { Some(j) } else { la }));
            }
        }
        std::mem::swap(&mut poly, &mut next);
        if poly.len() < 3 {
            return None;
        }
    }
    let mut star = Vec::with_capacity(poly.len());
    for &(_, owner) in &poly {
        let j = owner?;
        if star.last() != Some(&j) {
            star.push(j);
        }
    }
    if star.len() > 1 && star.first() == star.last() {
        star.pop();
    }
    if star.len() < 3 {
        return None;
    }
    // Clipping against the far box loses precision; each cell vertex is the
    // circumcenter of the origin and two consecutive star neighbors, so
    // recompute it from those directly.
    let m = star.len();
    let cell = (0..m)
        .map(|t| {
            let a = pts[star[(t + m - 1) % m]];
            let b = pts[star[t]];
            let det = cross2(a, b);
            let (ca, cb) = (0.5 * dot2(a, a), 0.5 * dot2(b, b));
            [(ca * b[1] - a[1] * cb) / det, (a[0] * cb - ca * b[0]) / det]
        })
        .collect::<Vec<_>>();
    if cell.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return None;
    }
    Some((cell, star))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CotangentWeights {
    /// Positions in `neighbors2d`, same order as the star.
    pub star: Vec<usize>,
    /// `(cot a + cot b) / 2` before clamping.
    pub raw: Vec<f64>,
    /// Clamped to be nonnegative, or uniform when everything clamped to zero.
    pub w: Vec<f64>,
    /// Sum of `w`.
    pub total: f64,
    pub uniform_fallback: bool,
}

impl CotangentWeights {
    pub fn normalized(&self) -> Vec<f64> {
        self.w.iter().map(|w| w / self.total).collect()
    }
}

/// Cotangent of the angle at `v` in the triangle `(v, a, b)`.
#[inline]
fn cot_at(v: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let x = sub2(a, v);
    let y = sub2(b, v);
    let s = cross2(x, y).abs();
    if s == 0.0 {
        0.0
    } else {
        dot2(x, y) / s
    }
}

/// Weights on the center's Delaunay edges. For the edge to star neighbor
/// `j`, the two opposite angles sit at the previous and next star neighbors.
pub fn cotangent_weights(tn: &TangentNeighborhood) -> Result<CotangentWeights> {
    if !tn.cell_closed {
        return Err(Error::BoundaryPoint);
    }
    let o = tn.center2d();
    let s = &tn.star;
    let m = s.len();
    let q = |t: usize| tn.neighbors2d[s[t % m]];
    let raw: Vec<f64> = (0..m)
        .map(|t| {
            let qj = q(t);
            let prev = q(t + m - 1);
            let next = q(t + 1);
            0.5 * (cot_at(prev, o, qj) + cot_at(next, o, qj))
        })
        .collect();
    Ok(clamp_weights(s.clone(), raw))
}

/// Negative weights clamp to zero; if nothing positive is left the weights
/// become uniform.
fn clamp_weights(star: Vec<usize>, raw: Vec<f64>) -> CotangentWeights {
    let mut w: Vec<f64> = raw.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
    let mut total: f64 = w.iter().sum();
    let mut uniform_fallback = false;
    if !(total > 0.0) || !total.is_finite() {
        w = vec![1.0; raw.len()];
        total = raw.len() as f64;
        uniform_fallback = true;
    }
    CotangentWeights {
        star,
        raw,
        w,
        total,
        uniform_fallback,
    }
}

/// Weighted central displacement: the weighted centroid of the star, lifted
/// back through the frame.
pub fn displace(tn: &TangentNeighborhood, w: &CotangentWeights) -> Result<Point3> {
    if !tn.cell_closed {
        return Err(Error::BoundaryPoint);
    }
    let mut uv = [0.0, 0.0];
    for (&j, &wj) in w.star.iter().zip(&w.w) {
        let p = tn.neighbors2d[j];
        uv[0] += wj * p[0];
        uv[1] += wj * p[1];
    }
    uv[0] /= w.total;
    uv[1] /= w.total;
    Ok(tn.frame.lift(uv))
}

/// Centroid of the center's Voronoi cell, lifted through the frame.
///
/// The cell splits into one triangle per star edge, `(center, v_t, v_t+1)`,
/// whose area is `w_ij |q_j|^2 / 4`; the centroid is the area-weighted mean
/// of the triangle centroids. On a flat Delaunay star the cotangent-weighted
/// neighbor mean of [`displace`] is the center itself, so this is the form
/// that actually moves points toward a centroidal configuration.
pub fn cell_centroid(tn: &TangentNeighborhood, w: &CotangentWeights) -> Result<Point3> {
    if !tn.cell_closed {
        return Err(Error::BoundaryPoint);
    }
    let m = tn.cell.len();
    let mut area = 0.0;
    let mut uv = [0.0, 0.0];
    for (t, (&j, &wj)) in w.star.iter().zip(&w.w).enumerate() {
        if w.uniform_fallback {
            break;
        }
        let q = tn.neighbors2d[j];
        let a = 0.25 * wj * dot2(q, q);
        let (v0, v1) = (tn.cell[t], tn.cell[(t + 1) % m]);
        area += a;
        uv[0] += a * (v0[0] + v1[0]) / 3.0;
        uv[1] += a * (v0[1] + v1[1]) / 3.0;
    }
    if !(area > 0.0) {
        return Err(Error::DegenerateProjection);
    }
    Ok(tn.frame.lift([uv[0] / area, uv[1] / area]))
}

/// Convex hull, counter-clockwise, without collinear points.
pub(crate) fn convex_hull(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2
                && cross2(sub2(hull[hull.len() - 1], hull[hull.len() - 2]), sub2(q, hull[hull.len() - 2])) <= 0.0
            {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Clips a polygon to the convex CCW polygon `clip`.
fn clip_convex(poly: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = poly.to_vec();
    for e in 0..clip.len() {
        let (a, b) = (clip[e], clip[(e + 1) % clip.len()]);
        let side = |p: [f64; 2]| cross2(sub2(b, a), sub2(p, a));
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (p, q) = (input[i], input[(i + 1) % input.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t]);
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

fn polygon_centroid(poly: &[[f64; 2]]) -> Option<[f64; 2]> {
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let c = cross2(p, q);
        a2 += c;
        cx += (p[0] + q[0]) * c;
        cy += (p[1] + q[1]) * c;
    }
    (a2 > 0.0).then(|| [cx / (3.0 * a2), cy / (3.0 * a2)])
}

/// [`cell_centroid`] of the cell restricted to the convex hull of the
/// projected neighbors. A barely closed cell can reach far past its
/// neighbors; restricting keeps the target inside the neighborhood and
/// leaves cells already inside the hull unchanged.
pub fn restricted_cell_centroid(tn: &TangentNeighborhood, w: &CotangentWeights) -> Result<Point3> {
    if !tn.cell_closed {
        return Err(Error::BoundaryPoint);
    }
    let hull = convex_hull(&tn.neighbors2d);
    let inside = tn.cell.iter().all(|&v| {
        (0..hull.len()).all(|e| cross2(sub2(hull[(e + 1) % hull.len()], hull[e]), sub2(v, hull[e])) >= 0.0)
    });
    if inside {
        return cell_centroid(tn, w);
    }
    let clipped = clip_convex(&tn.cell, &hull);
    let c = polygon_centroid(&clipped).ok_or(Error::DegenerateProjection)?;
    Ok(tn.frame.lift(c))
}

/// Projects point `i` of `index` with its `k` nearest neighbors onto the
/// tangent plane fitted to those `k + 1` points.
pub fn neighborhood_at(index: &SpatialIndex, i: usize, k: usize) -> Result<TangentNeighborhood> {
    let nn = index.knn_of(i, k)?;
    let ids: Vec<usize> = nn.iter().map(|n| n.index).collect();
    neighborhood_from(index, i, &ids)
}

pub(crate) fn neighborhood_from(index: &SpatialIndex, i: usize, ids: &[usize]) -> Result<TangentNeighborhood> {
    let center = index.point(i);
    let nbrs: Vec<Point3> = ids.iter().map(|&j| index.point(j)).collect();
    let mut all = Vec::with_capacity(nbrs.len() + 1);
    all.push(center);
    all.extend_from_slice(&nbrs);
    let normal = estimate_normal(&all)?;
    project_to_tangent(center, &nbrs, ids, &LocalFrame::new(center, normal))
}
