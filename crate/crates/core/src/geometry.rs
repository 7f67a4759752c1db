//! Geometric error bound: distances from surface samples to the enveloping
//! volume of the medial mesh (spheres, cones, slabs), and the insertion pass
//! that keeps every sample within the user bound.

use rayon::prelude::*;

use crate::math::{Aabb, Point};
use crate::medial::MedialMesh;
use crate::mesh::{SampleKind, SurfaceSample, TetMesh};
use crate::sphere::{sphere_shrink, MedialSphere, ShrinkParams, SphereId, SphereKind, SphereSet};

/// Swept-sphere envelope element of the medial mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopePrimitive {
    Sphere(SphereId),
    /// Linear interpolation of two spheres (medial cone).
    Cone(SphereId, SphereId),
    /// Barycentric interpolation of three spheres (medial slab).
    Slab(SphereId, SphereId, SphereId),
}

/// Parameter tolerance of the 1D/2D minimizations.
const PARAM_TOL: f64 = 1e-10;

/// All envelope primitives of a medial mesh: one sphere per vertex, one cone
/// per edge, one slab per face.
pub fn primitives_of(mm: &MedialMesh) -> Vec<EnvelopePrimitive> {
    let mut out = Vec::with_capacity(mm.vertices.len() + mm.edges.len() + mm.faces.len());
    out.extend(mm.vertices.iter().map(|&i| EnvelopePrimitive::Sphere(i)));
    out.extend(mm.edges.iter().map(|&(i, j)| EnvelopePrimitive::Cone(i, j)));
    out.extend(
        mm.faces
            .iter()
            .map(|f| EnvelopePrimitive::Slab(f[0], f[1], f[2])),
    );
    out
}

/// Signed distance from `p` to the envelope surface of `prim` (negative
/// inside the envelope).
pub fn signed_envelope_distance(p: &Point, prim: &EnvelopePrimitive, spheres: &SphereSet) -> f64 {
    match *prim {
        EnvelopePrimitive::Sphere(i) => {
            let s = spheres.get(i);
            (p - s.center).norm() - s.radius
        }
        EnvelopePrimitive::Cone(i, j) => {
            let (a, b) = (spheres.get(i), spheres.get(j));
            let f = |t: f64| {
                let c = a.center + (b.center - a.center) * t;
                let r = a.radius + (b.radius - a.radius) * t;
                (p - c).norm() - r
            };
            // f is convex in t: ternary search on [0, 1].
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while hi - lo > PARAM_TOL {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if f(m1) <= f(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            f(0.5 * (lo + hi))
        }
        EnvelopePrimitive::Slab(i, j, k) => {
            let (a, b, c) = (spheres.get(i), spheres.get(j), spheres.get(k));
            let eval = |u: f64, v: f64| {
                let ctr =
                    a.center + (b.center - a.center) * u + (c.center - a.center) * v;
                let r = a.radius + (b.radius - a.radius) * u + (c.radius - a.radius) * v;
                (p - ctr).norm() - r
            };
            // Projected gradient descent on the (convex) objective over the
            // barycentric triangle u, v >= 0, u + v <= 1.
            let project = |mut u: f64, mut v: f64| {
                u = u.max(0.0);
                v = v.max(0.0);
                if u + v > 1.0 {
                    let excess = (u + v - 1.0) / 2.0;
                    u -= excess;
                    v -= excess;
                    u = u.max(0.0);
                    v = v.max(0.0);
                    let s = u + v;
                    if s > 1.0 {
                        u /= s;
                        v /= s;
                    }
                }
                (u, v)
            };
            let (mut u, mut v) = (1.0 / 3.0, 1.0 / 3.0);
            let mut fv = eval(u, v);
            let mut step = 0.5;
            for _ in 0..200 {
                let h = 1e-7;
                let gu = (eval(project(u + h, v).0, project(u + h, v).1) - fv) / h;
                let gv = (eval(project(u, v + h).0, project(u, v + h).1) - fv) / h;
                let (nu, nv) = project(u - step * gu, v - step * gv);
                let nf = eval(nu, nv);
                if nf < fv - 1e-15 {
                    u = nu;
                    v = nv;
                    fv = nf;
                } else {
                    step *= 0.5;
                    if step < PARAM_TOL {
                        break;
                    }
                }
            }
            // Boundary fallback: the minimum may sit on an edge or vertex of
            // the parameter triangle.
            let edges = [
                signed_envelope_distance(p, &EnvelopePrimitive::Cone(i, j), spheres),
                signed_envelope_distance(p, &EnvelopePrimitive::Cone(i, k), spheres),
                signed_envelope_distance(p, &EnvelopePrimitive::Cone(j, k), spheres),
            ];
            fv.min(edges[0]).min(edges[1]).min(edges[2])
        }
    }
}

/// Unsigned distance to the enveloping surface: 0 when `p` lies inside.
pub fn envelope_distance(p: &Point, prim: &EnvelopePrimitive, spheres: &SphereSet) -> f64 {
    signed_envelope_distance(p, prim, spheres).max(0.0)
}

fn primitive_bbox(prim: &EnvelopePrimitive, spheres: &SphereSet) -> Aabb {
    let mut bb = Aabb::empty();
    let mut grow = |i: SphereId| {
        let s = spheres.get(i);
        for k in 0..3 {
            bb.min[k] = bb.min[k].min(s.center[k] - s.radius);
            bb.max[k] = bb.max[k].max(s.center[k] + s.radius);
        }
    };
    match *prim {
        EnvelopePrimitive::Sphere(i) => grow(i),
        EnvelopePrimitive::Cone(i, j) => {
            grow(i);
            grow(j);
        }
        EnvelopePrimitive::Slab(i, j, k) => {
            grow(i);
            grow(j);
            grow(k);
        }
    }
    bb
}

/// Bounding-volume index over envelope primitives for nearest queries.
pub struct EnvelopeIndex {
    prims: Vec<EnvelopePrimitive>,
    boxes: Vec<Aabb>,
    nodes: Vec<(Aabb, NodeKind)>,
    root: usize,
}

enum NodeKind {
    Leaf(Vec<usize>),
    Split(usize, usize),
}

impl EnvelopeIndex {
    pub fn build(mm: &MedialMesh, spheres: &SphereSet) -> Option<EnvelopeIndex> {
        let prims = primitives_of(mm);
        if prims.is_empty() {
            return None;
        }
        let boxes: Vec<Aabb> = prims
            .iter()
            .map(|p| primitive_bbox(p, spheres))
            .collect();
        let mut nodes = Vec::new();
        let idx: Vec<usize> = (0..prims.len()).collect();
        let root = Self::build_node(&boxes, idx, &mut nodes);
        Some(EnvelopeIndex {
            prims,
            boxes,
            nodes,
            root,
        })
    }

    fn build_node(boxes: &[Aabb], mut idx: Vec<usize>, nodes: &mut Vec<(Aabb, NodeKind)>) -> usize {
        let mut bb = Aabb::empty();
        for &i in &idx {
            bb.merge(&boxes[i]);
        }
        if idx.len() <= 8 {
            nodes.push((bb, NodeKind::Leaf(idx)));
            return nodes.len() - 1;
        }
        let axis = bb.longest_axis();
        idx.sort_by(|&a, &b| boxes[a].center()[axis].total_cmp(&boxes[b].center()[axis]));
        let right = idx.split_off(idx.len() / 2);
        let l = Self::build_node(boxes, idx, nodes);
        let r = Self::build_node(boxes, right, nodes);
        nodes.push((bb, NodeKind::Split(l, r)));
        nodes.len() - 1
    }

    /// Minimum signed envelope distance over all primitives.
    pub fn min_signed_distance(&self, p: &Point, spheres: &SphereSet) -> f64 {
        let mut best = f64::INFINITY;
        self.descend(self.root, p, spheres, &mut best);
        best
    }

    /// Minimum unsigned distance (0 inside the envelope).
    pub fn min_distance(&self, p: &Point, spheres: &SphereSet) -> f64 {
        self.min_signed_distance(p, spheres).max(0.0)
    }

    fn descend(&self, node: usize, p: &Point, spheres: &SphereSet, best: &mut f64) {
        let (bb, kind) = &self.nodes[node];
        // d(p, bbox) lower-bounds the signed distance of everything inside.
        if bb.dist2(p).sqrt() >= *best {
            return;
        }
        match kind {
            NodeKind::Leaf(items) => {
                for &i in items {
                    if self.boxes[i].dist2(p).sqrt() >= *best {
                        continue;
                    }
                    let d = signed_envelope_distance(p, &self.prims[i], spheres);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            NodeKind::Split(l, r) => {
                self.descend(*l, p, spheres, best);
                self.descend(*r, p, spheres, best);
            }
        }
    }
}

/// Per-round geometry statistics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GeometryRoundStats {
    pub max_distance_pct: f64,
    pub mean_distance_pct: f64,
    pub n_violations: usize,
    pub n_inserted: usize,
}

pub struct GeometryOutcome {
    pub new_spheres: Vec<MedialSphere>,
    pub stats: GeometryRoundStats,
    /// Indices of samples currently within the bound.
    pub satisfied: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct GeometryParams {
    /// User bound, percent of the bounding-box diagonal.
    pub delta_eps: f64,
    /// Insertions per round, worst violators first.
    pub max_insertions_per_round: usize,
    pub eps_dup: f64,
    pub shrink: ShrinkParams,
}

impl GeometryParams {
    pub fn new(mesh: &TetMesh, delta_eps: f64) -> Self {
        GeometryParams {
            delta_eps,
            max_insertions_per_round: 256,
            eps_dup: 1e-3 * mesh.bbox_diag,
            shrink: ShrinkParams::default(),
        }
    }
}

/// Check every surface sample against the envelope and propose insertions
/// for the worst violators: zero-radius feature spheres for feature samples
/// (distance to the feature cone chain), shrink spheres for the rest.
pub fn geometry_check_and_insert(
    mesh: &TetMesh,
    spheres: &SphereSet,
    mm: &MedialMesh,
    samples: &[SurfaceSample],
    params: &GeometryParams,
) -> GeometryOutcome {
    let index = EnvelopeIndex::build(mm, spheres);
    // Feature cones: consecutive zero-radius feature spheres along feature
    // polylines.
    let feature_chain = feature_cone_chain(mesh, spheres);

    let distances: Vec<f64> = samples
        .par_iter()
        .map(|s| match s.kind {
            SampleKind::Interior => index
                .as_ref()
                .map(|ix| ix.min_distance(&s.position, spheres))
                .unwrap_or(f64::INFINITY),
            SampleKind::FeatureEdge | SampleKind::Corner => {
                feature_chain_distance(&s.position, &feature_chain, spheres)
            }
        })
        .collect();

    let diag = mesh.bbox_diag;
    let to_pct = |d: f64| d / diag * 100.0;
    let mut violations: Vec<(usize, f64)> = distances
        .iter()
        .enumerate()
        .filter(|(_, &d)| to_pct(d) > params.delta_eps)
        .map(|(i, &d)| (i, d))
        .collect();
    violations.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut new_spheres = Vec::new();
    let mut accepted: Vec<Point> = Vec::new();
    let too_close = |p: &Point, accepted: &[Point]| {
        spheres.min_center_distance(p) < params.eps_dup
            || accepted.iter().any(|q| (q - p).norm() < params.eps_dup)
    };
    for &(si, _d) in violations.iter() {
        if new_spheres.len() >= params.max_insertions_per_round {
            break;
        }
        let s = &samples[si];
        match s.kind {
            SampleKind::FeatureEdge | SampleKind::Corner => {
                let kind = if s.kind == SampleKind::Corner {
                    SphereKind::Corner
                } else {
                    SphereKind::FeatureEdge
                };
                if too_close(&s.position, &accepted) {
                    continue;
                }
                if let Ok(fs) = crate::sphere::make_feature_sphere(mesh, s.position, kind) {
                    accepted.push(fs.center);
                    new_spheres.push(fs);
                }
            }
            SampleKind::Interior => {
                let Ok(res) = sphere_shrink(mesh, s.position, s.normal, &params.shrink) else {
                    continue;
                };
                if too_close(&res.sphere.center, &accepted) {
                    continue;
                }
                accepted.push(res.sphere.center);
                new_spheres.push(res.sphere);
            }
        }
    }

    let n_samples = samples.len().max(1);
    let stats = GeometryRoundStats {
        max_distance_pct: distances.iter().copied().fold(0.0, f64::max) / diag * 100.0,
        mean_distance_pct: distances.iter().sum::<f64>() / n_samples as f64 / diag * 100.0,
        n_violations: violations.len(),
        n_inserted: new_spheres.len(),
    };
    let satisfied = distances
        .iter()
        .map(|&d| to_pct(d) <= params.delta_eps)
        .collect();
    GeometryOutcome {
        new_spheres,
        stats,
        satisfied,
    }
}

/// Cones between consecutive zero-radius feature spheres along each feature
/// polyline, plus the spheres themselves (for chains of length 1).
pub fn feature_cone_chain(mesh: &TetMesh, spheres: &SphereSet) -> Vec<(Point, Point)> {
    let feature_spheres: Vec<&MedialSphere> = spheres
        .active()
        .filter(|s| s.kind.is_feature())
        .collect();
    if feature_spheres.is_empty() {
        return Vec::new();
    }
    // Group feature spheres by nearest feature polyline segment ordering:
    // project on feature edges, then connect consecutive spheres along each
    // polyline by arc-length order.
    let polylines = crate::features::feature_polylines(mesh);
    let mut chain = Vec::new();
    for line in &polylines {
        // Arc-length position of each sphere on this polyline.
        let mut on_line: Vec<(f64, Point)> = Vec::new();
        for s in &feature_spheres {
            if let Some(t) = line.arclength_of(&s.center, 1e-4 * mesh.bbox_diag) {
                on_line.push((t, s.center));
            }
        }
        on_line.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in on_line.windows(2) {
            chain.push((w[0].1, w[1].1));
        }
        if on_line.len() == 1 {
            chain.push((on_line[0].1, on_line[0].1));
        }
        if line.closed && on_line.len() >= 2 {
            chain.push((on_line[on_line.len() - 1].1, on_line[0].1));
        }
    }
    chain
}

/// Distance from `p` to the nearest feature enveloping cone (zero-radius
/// cones degenerate to segments). Infinite when no feature spheres exist,
/// which forces an insertion.
fn feature_chain_distance(p: &Point, chain: &[(Point, Point)], _spheres: &SphereSet) -> f64 {
    chain
        .iter()
        .map(|(a, b)| (crate::math::closest_point_on_segment(p, a, b) - p).norm())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{MedialSphere, SphereKind};

    fn set_of(spheres: Vec<MedialSphere>) -> SphereSet {
        let mut set = SphereSet::new();
        for s in spheres {
            set.insert(s);
        }
        set
    }

    #[test]
    fn sphere_distance_examples() {
        let set = set_of(vec![MedialSphere::new(Point::origin(), 1.0, SphereKind::T2)]);
        let prim = EnvelopePrimitive::Sphere(0);
        assert!((envelope_distance(&Point::new(3.0, 0.0, 0.0), &prim, &set) - 2.0).abs() < 1e-12);
        // Inside: clamped to 0.
        assert_eq!(envelope_distance(&Point::new(0.2, 0.0, 0.0), &prim, &set), 0.0);
    }

    #[test]
    fn equal_radius_cone_is_cylinder() {
        let set = set_of(vec![
            MedialSphere::new(Point::new(0.0, 0.0, 0.0), 1.0, SphereKind::T2),
            MedialSphere::new(Point::new(4.0, 0.0, 0.0), 1.0, SphereKind::T2),
        ]);
        let prim = EnvelopePrimitive::Cone(0, 1);
        let d = envelope_distance(&Point::new(2.0, 2.0, 0.0), &prim, &set);
        assert!((d - 1.0).abs() < 1e-9, "cylinder case: got {d}");
        // Beyond an endpoint the sphere cap rules.
        let d = envelope_distance(&Point::new(6.0, 0.0, 0.0), &prim, &set);
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slab_matches_dense_sampling_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let set = set_of(
                (0..3)
                    .map(|_| {
                        MedialSphere::new(
                            Point::new(
                                rng.gen::<f64>() * 4.0,
                                rng.gen::<f64>() * 4.0,
                                rng.gen::<f64>() * 4.0,
                            ),
                            0.3 + rng.gen::<f64>(),
                            SphereKind::T2,
                        )
                    })
                    .collect(),
            );
            let prim = EnvelopePrimitive::Slab(0, 1, 2);
            let p = Point::new(
                rng.gen::<f64>() * 8.0 - 2.0,
                rng.gen::<f64>() * 8.0 - 2.0,
                rng.gen::<f64>() * 8.0 - 2.0,
            );
            let fast = signed_envelope_distance(&p, &prim, &set);
            // Dense barycentric sampling oracle.
            let mut brute = f64::INFINITY;
            let n = 100;
            for iu in 0..=n {
                for iv in 0..=(n - iu) {
                    let (u, v) = (iu as f64 / n as f64, iv as f64 / n as f64);
                    let a = set.get(0);
                    let b = set.get(1);
                    let c = set.get(2);
                    let ctr = a.center + (b.center - a.center) * u + (c.center - a.center) * v;
                    let r = a.radius + (b.radius - a.radius) * u + (c.radius - a.radius) * v;
                    brute = brute.min((p - ctr).norm() - r);
                }
            }
            assert!(
                (fast - brute).abs() < 1e-4,
                "slab distance {fast} vs oracle {brute}"
            );
            assert!(fast <= brute + 1e-12, "solver must not exceed the oracle");
        }
    }

    #[test]
    fn envelope_distance_is_one_lipschitz() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let set = set_of(vec![
            MedialSphere::new(Point::new(0.0, 0.0, 0.0), 1.0, SphereKind::T2),
            MedialSphere::new(Point::new(3.0, 1.0, 0.0), 0.5, SphereKind::T2),
            MedialSphere::new(Point::new(1.0, 3.0, 2.0), 1.5, SphereKind::T2),
        ]);
        let prims = [
            EnvelopePrimitive::Cone(0, 1),
            EnvelopePrimitive::Slab(0, 1, 2),
        ];
        for prim in &prims {
            for _ in 0..200 {
                let p = Point::new(rng.gen::<f64>() * 8.0, rng.gen::<f64>() * 8.0, rng.gen::<f64>() * 8.0);
                let q = Point::new(rng.gen::<f64>() * 8.0, rng.gen::<f64>() * 8.0, rng.gen::<f64>() * 8.0);
                let dp = envelope_distance(&p, prim, &set);
                let dq = envelope_distance(&q, prim, &set);
                assert!((dp - dq).abs() <= (p - q).norm() + 1e-9);
            }
        }
    }

    #[test]
    fn adding_primitives_never_increases_distance() {
        let set = set_of(vec![
            MedialSphere::new(Point::new(0.0, 0.0, 0.0), 1.0, SphereKind::T2),
            MedialSphere::new(Point::new(5.0, 0.0, 0.0), 1.0, SphereKind::T2),
        ]);
        let p = Point::new(2.5, 0.5, 0.0);
        let d_before = envelope_distance(&p, &EnvelopePrimitive::Sphere(0), &set);
        let with_cone = d_before.min(envelope_distance(&p, &EnvelopePrimitive::Cone(0, 1), &set));
        assert!(with_cone <= d_before);
    }
}
