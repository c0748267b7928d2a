//! Exact k-nearest-neighbor and radius queries over a fixed point snapshot.
//!
//! A static kd-tree with per-node bounding boxes. Results are exact and ties
//! on distance are broken by ascending point index, so every query is a pure
//! function of the snapshot.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::Point3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    lo: Point3,
    hi: Point3,
    start: u32,
    end: u32,
    /// Child node ids; 0 marks a leaf since the root can never be a child.
    left: u32,
    right: u32,
}

impl Node {
    #[inline]
    fn min_dist_squared(&self, q: Point3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = q.axis(a);
            let lo = self.lo.axis(a);
            let hi = self.hi.axis(a);
            let e = if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                0.0
            };
            d += e * e;
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// A neighbor hit: point index and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::InvalidConfig("too many points for the index".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(format!("point {i} is not finite")));
        }
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> u32 {
        let slice = &self.order[start..end];
        let first = self.points[slice[0] as usize];
        let (lo, hi) = slice.iter().fold((first, first), |(lo, hi), &i| {
            let p = self.points[i as usize];
            (lo.min(p), hi.max(p))
        });
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo,
            hi,
            start: start as u32,
            end: end as u32,
            left: 0,
            right: 0,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let ext = hi - lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        if ext.axis(axis) == 0.0 {
            // All points coincide; keep them in one leaf.
            return id;
        }
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize]
                .axis(axis)
                .total_cmp(&points[b as usize].axis(axis))
        });
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id as usize].left = left;
        self.nodes[id as usize].right = right;
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    /// The `k` nearest points to `q`, ascending by distance then index.
    /// `exclude` names a point index (usually `q`'s own) to skip.
    pub fn knn(&self, q: Point3, k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let available = self.len() - usize::from(exclude.is_some_and(|e| e < self.len()));
        if k > available {
            return Err(Error::InsufficientPoints {
                needed: k,
                available,
            });
        }
        Ok(self.knn_filtered(q, k, |i| Some(i) != exclude))
    }

    /// Neighbors of indexed point `i`, excluding itself.
    pub fn knn_of(&self, i: usize, k: usize) -> Result<Vec<Neighbor>> {
        self.knn(self.points[i], k, Some(i))
    }

    /// Like [`knn`](Self::knn) but only considers points accepted by `keep`.
    /// Returns fewer than `k` results when not enough points pass.
    pub fn knn_filtered(&self, q: Point3, k: usize, keep: impl Fn(usize) -> bool) -> Vec<Neighbor> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.knn_rec(0, q, k, &keep, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        out.into_iter()
            .map(|c| Neighbor {
                index: c.index as usize,
                distance: c.d2.sqrt(),
            })
            .collect()
    }

    fn knn_rec(
        &self,
        node: u32,
        q: Point3,
        k: usize,
        keep: &impl Fn(usize) -> bool,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        let n = &self.nodes[node as usize];
        if heap.len() == k {
            // Equal distances may still win on index, so prune only strictly.
            if n.min_dist_squared(q) > heap.peek().unwrap().d2 {
                return;
            }
        }
        if n.left == 0 {
            for &i in &self.order[n.start as usize..n.end as usize] {
                if !keep(i as usize) {
                    continue;
                }
                let c = Candidate {
                    d2: self.points[i as usize].distance_squared(q),
                    index: i,
                };
                if heap.len() < k {
                    heap.push(c);
                } else if c < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(c);
                }
            }
            return;
        }
        let (a, b) = (n.left, n.right);
        let da = self.nodes[a as usize].min_dist_squared(q);
        let db = self.nodes[b as usize].min_dist_squared(q);
        let (first, second) = if da <= db { (a, b) } else { (b, a) };
        self.knn_rec(first, q, k, keep, heap);
        self.knn_rec(second, q, k, keep, heap);
    }

    /// Indices of all points strictly closer than `r` to `q`, ascending.
    pub fn radius_query(&self, q: Point3, r: f64) -> Result<Vec<usize>> {
        if !(r > 0.0) {
            return Err(Error::InvalidRadius(r));
        }
        let mut out = Vec::new();
        self.radius_rec(0, q, r * r, &mut out);
        out.sort_unstable();
        Ok(out)
    }

    fn radius_rec(&self, node: u32, q: Point3, r2: f64, out: &mut Vec<usize>) {
        let n = &self.nodes[node as usize];
        if n.min_dist_squared(q) >= r2 {
            return;
        }
        if n.left == 0 {
            out.extend(
                self.order[n.start as usize..n.end as usize]
                    .iter()
                    .map(|&i| i as usize)
                    .filter(|&i| self.points[i].distance_squared(q) < r2),
            );
            return;
        }
        self.radius_rec(n.left, q, r2, out);
        self.radius_rec(n.right, q, r2, out);
    }
}
