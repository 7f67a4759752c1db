//! Axis-aligned bounding-volume tree over surface triangles, used for
//! nearest-surface-point queries by the sphere-shrinking loop and the
//! Hausdorff sampler.

use crate::math::{closest_point_on_triangle, Aabb, Point};

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    /// Leaf: range into `order`; internal: children indices.
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Internal { left: usize, right: usize },
}

/// Median-split BVH over a triangle soup.
#[derive(Debug, Clone)]
pub struct TriBvh {
    tris: Vec<[Point; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

const LEAF_SIZE: usize = 8;

impl TriBvh {
    pub fn build(tris: Vec<[Point; 3]>) -> Self {
        assert!(!tris.is_empty(), "BVH over empty triangle set");
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let centroids: Vec<Point> = tris
            .iter()
            .map(|t| Point::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
            .collect();
        let mut nodes = Vec::new();
        let n = tris.len();
        let root = Self::build_node(&tris, &centroids, &mut order, 0, n, &mut nodes);
        TriBvh {
            tris,
            order,
            nodes,
            root,
        }
    }

    fn build_node(
        tris: &[[Point; 3]],
        centroids: &[Point],
        order: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let mut bbox = Aabb::empty();
        for &i in &order[start..end] {
            for p in &tris[i] {
                bbox.grow(p);
            }
        }
        if end - start <= LEAF_SIZE {
            nodes.push(Node {
                bbox,
                kind: NodeKind::Leaf { start, end },
            });
            return nodes.len() - 1;
        }
        let axis = bbox.longest_axis();
        let mid = (start + end) / 2;
        order[start..end].sort_unstable_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
        let left = Self::build_node(tris, centroids, order, start, mid, nodes);
        let right = Self::build_node(tris, centroids, order, mid, end, nodes);
        nodes.push(Node {
            bbox,
            kind: NodeKind::Internal { left, right },
        });
        nodes.len() - 1
    }

    /// Closest point on any triangle to `p`; returns (point, triangle index).
    pub fn nearest(&self, p: &Point) -> (Point, usize) {
        let mut best_d2 = f64::INFINITY;
        let mut best = (self.tris[0][0], 0usize);
        self.nearest_rec(self.root, p, &mut best_d2, &mut best);
        best
    }

    /// Closest point among triangles passing `filter(tri_index)`.
    pub fn nearest_filtered(
        &self,
        p: &Point,
        filter: &dyn Fn(usize) -> bool,
    ) -> Option<(Point, usize)> {
        let mut best_d2 = f64::INFINITY;
        let mut best = None;
        self.nearest_filtered_rec(self.root, p, filter, &mut best_d2, &mut best);
        best
    }

    fn nearest_rec(&self, node: usize, p: &Point, best_d2: &mut f64, best: &mut (Point, usize)) {
        let n = &self.nodes[node];
        if n.bbox.dist2(p) >= *best_d2 {
            return;
        }
        match n.kind {
            NodeKind::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let t = &self.tris[i];
                    let q = closest_point_on_triangle(p, &t[0], &t[1], &t[2]);
                    let d2 = (q - p).norm_squared();
                    if d2 < *best_d2 {
                        *best_d2 = d2;
                        *best = (q, i);
                    }
                }
            }
            NodeKind::Internal { left, right } => {
                let dl = self.nodes[left].bbox.dist2(p);
                let dr = self.nodes[right].bbox.dist2(p);
                if dl <= dr {
                    self.nearest_rec(left, p, best_d2, best);
                    self.nearest_rec(right, p, best_d2, best);
                } else {
                    self.nearest_rec(right, p, best_d2, best);
                    self.nearest_rec(left, p, best_d2, best);
                }
            }
        }
    }

    fn nearest_filtered_rec(
        &self,
        node: usize,
        p: &Point,
        filter: &dyn Fn(usize) -> bool,
        best_d2: &mut f64,
        best: &mut Option<(Point, usize)>,
    ) {
        let n = &self.nodes[node];
        if n.bbox.dist2(p) >= *best_d2 {
            return;
        }
        match n.kind {
            NodeKind::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if !filter(i) {
                        continue;
                    }
                    let t = &self.tris[i];
                    let q = closest_point_on_triangle(p, &t[0], &t[1], &t[2]);
                    let d2 = (q - p).norm_squared();
                    if d2 < *best_d2 {
                        *best_d2 = d2;
                        *best = Some((q, i));
                    }
                }
            }
            NodeKind::Internal { left, right } => {
                self.nearest_filtered_rec(left, p, filter, best_d2, best);
                self.nearest_filtered_rec(right, p, filter, best_d2, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_matches_bruteforce() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let tris: Vec<[Point; 3]> = (0..200)
            .map(|_| {
                let base = Point::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()) * 10.0;
                [
                    base,
                    base + crate::math::Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                    base + crate::math::Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                ]
            })
            .collect();
        let bvh = TriBvh::build(tris.clone());
        for _ in 0..100 {
            let p = Point::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()) * 12.0;
            let (q, _) = bvh.nearest(&p);
            let brute = tris
                .iter()
                .map(|t| {
                    let c = closest_point_on_triangle(&p, &t[0], &t[1], &t[2]);
                    (c - p).norm_squared()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(((q - p).norm_squared() - brute).abs() < 1e-10);
        }
    }
}
