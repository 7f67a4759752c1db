//! Medial feature preservation: external features (sharp edges, corners,
//! concave edges) and internal features (seams, junctions).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::math::{closest_point_on_segment, Point, Vec3};
use crate::medial::MedialMesh;
use crate::mesh::TetMesh;
use crate::rpd::Rpd;
use crate::sphere::{
    make_feature_sphere, optimize_tn_sphere, sphere_shrink, MedialSphere, ShrinkParams, SphereId,
    SphereKind, SphereSet,
};
use crate::topo::surface_fragments;

#[derive(Debug, Clone)]
pub struct FeatureParams {
    /// Feature segmentation arc length (2% of the bbox diagonal).
    pub h_fea: f64,
    /// Normal-cluster matching threshold for the sheet test.
    pub theta_sheet_deg: f64,
    pub eps_dup: f64,
    pub eps_tan: f64,
    pub shrink: ShrinkParams,
}

impl FeatureParams {
    pub fn for_mesh(mesh: &TetMesh) -> Self {
        FeatureParams {
            h_fea: 0.02 * mesh.bbox_diag,
            theta_sheet_deg: 30.0,
            eps_dup: 1e-3 * mesh.bbox_diag,
            eps_tan: 1e-3 * mesh.bbox_diag,
            shrink: ShrinkParams::default(),
        }
    }
}

/// Chain of feature edges with uniform convexity, split at corners and
/// junctions.
#[derive(Debug, Clone)]
pub struct FeaturePolyline {
    pub points: Vec<Point>,
    pub convex: bool,
    pub closed: bool,
    cumlen: Vec<f64>,
}

impl FeaturePolyline {
    fn from_points(points: Vec<Point>, convex: bool, closed: bool) -> Self {
        let mut cumlen = vec![0.0];
        for w in points.windows(2) {
            cumlen.push(cumlen.last().unwrap() + (w[1] - w[0]).norm());
        }
        if closed {
            let wrap = (points[0] - *points.last().unwrap()).norm();
            cumlen.push(cumlen.last().unwrap() + wrap);
        }
        FeaturePolyline {
            points,
            convex,
            closed,
            cumlen,
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumlen.last().unwrap()
    }

    fn segment(&self, k: usize) -> (Point, Point) {
        let n = self.points.len();
        (self.points[k], self.points[(k + 1) % n])
    }

    fn n_segments(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    /// Arc-length parameter of `p` when it lies on the polyline within `tol`.
    pub fn arclength_of(&self, p: &Point, tol: f64) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for k in 0..self.n_segments() {
            let (a, b) = self.segment(k);
            let q = closest_point_on_segment(p, &a, &b);
            let d = (q - p).norm();
            if d <= tol && best.map(|(bd, _)| d < bd).unwrap_or(true) {
                let t = self.cumlen[k] + (q - a).norm();
                best = Some((d, t));
            }
        }
        best.map(|(_, t)| t)
    }

    /// Point at arc length `t`.
    pub fn point_at(&self, t: f64) -> Point {
        let total = self.length();
        let t = t.clamp(0.0, total);
        for k in 0..self.n_segments() {
            if t <= self.cumlen[k + 1] || k == self.n_segments() - 1 {
                let (a, b) = self.segment(k);
                let seg_len = (b - a).norm();
                let local = if seg_len > 0.0 {
                    (t - self.cumlen[k]) / seg_len
                } else {
                    0.0
                };
                return a + (b - a) * local.clamp(0.0, 1.0);
            }
        }
        *self.points.last().unwrap()
    }
}

/// Chain the detected feature edges into polylines, breaking at corners,
/// junction vertices, and convexity changes.
pub fn feature_polylines(mesh: &TetMesh) -> Vec<FeaturePolyline> {
    use std::collections::{BTreeMap, BTreeSet};
    let mut incident: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, fe) in mesh.feature_edges.iter().enumerate() {
        incident.entry(fe.verts[0]).or_default().push(k);
        incident.entry(fe.verts[1]).or_default().push(k);
    }
    let corner_set: BTreeSet<usize> = mesh.corners.iter().copied().collect();
    let is_break = |v: usize| corner_set.contains(&v) || incident[&v].len() != 2;

    let mut used = vec![false; mesh.feature_edges.len()];
    let mut lines = Vec::new();

    let walk = |start_edge: usize, start_vert: usize, used: &mut Vec<bool>| -> (Vec<usize>, Vec<usize>, bool) {
        // Returns (vertex chain, edge chain, closed).
        let mut verts = vec![start_vert];
        let mut edges = Vec::new();
        let mut v = start_vert;
        let mut e = start_edge;
        loop {
            used[e] = true;
            edges.push(e);
            let fe = &mesh.feature_edges[e];
            let next = if fe.verts[0] == v { fe.verts[1] } else { fe.verts[0] };
            verts.push(next);
            if next == start_vert {
                return (verts, edges, true);
            }
            if is_break(next) {
                return (verts, edges, false);
            }
            let convexity = mesh.feature_edges[e].convex;
            let candidates: Vec<usize> = incident[&next]
                .iter()
                .copied()
                .filter(|&k| !used[k] && mesh.feature_edges[k].convex == convexity)
                .collect();
            match candidates.first() {
                Some(&k) => {
                    v = next;
                    e = k;
                }
                None => return (verts, edges, false),
            }
        }
    };

    // Open chains first (seeded at break vertices or convexity changes).
    for start in 0..mesh.feature_edges.len() {
        if used[start] {
            continue;
        }
        let fe = &mesh.feature_edges[start];
        let seed_vert = if is_break(fe.verts[0]) || !chainable(mesh, &incident, fe.verts[0], start)
        {
            Some(fe.verts[0])
        } else if is_break(fe.verts[1]) || !chainable(mesh, &incident, fe.verts[1], start) {
            Some(fe.verts[1])
        } else {
            None
        };
        if let Some(v0) = seed_vert {
            let (verts, edges, closed) = walk(start, v0, &mut used);
            lines.push(FeaturePolyline::from_points(
                verts.iter().map(|&v| mesh.vertices[v]).collect(),
                mesh.feature_edges[edges[0]].convex,
                closed,
            ));
        }
    }
    // Remaining edges form closed loops.
    for start in 0..mesh.feature_edges.len() {
        if used[start] {
            continue;
        }
        let v0 = mesh.feature_edges[start].verts[0];
        let (mut verts, edges, closed) = walk(start, v0, &mut used);
        if closed {
            verts.pop(); // drop the duplicated start vertex
        }
        lines.push(FeaturePolyline::from_points(
            verts.iter().map(|&v| mesh.vertices[v]).collect(),
            mesh.feature_edges[edges[0]].convex,
            closed,
        ));
    }
    lines
}

fn chainable(
    mesh: &TetMesh,
    incident: &std::collections::BTreeMap<usize, Vec<usize>>,
    v: usize,
    edge: usize,
) -> bool {
    // The chain continues through v when exactly one other feature edge of
    // the same convexity leaves it.
    incident[&v]
        .iter()
        .any(|&k| k != edge && mesh.feature_edges[k].convex == mesh.feature_edges[edge].convex)
}

/// A piece of a feature polyline of roughly `h_fea` length.
#[derive(Debug, Clone)]
pub struct FeatureSegment {
    pub a: Point,
    pub b: Point,
    pub midpoint: Point,
    /// Deterministically de-symmetrized point on the segment, used as the
    /// insertion site. Mirror-symmetric midpoints produce degenerate power
    /// ties; the jitter keeps insertion positions generic while staying on
    /// the feature.
    pub insertion_point: Point,
    pub normal: Vec3,
    pub convex: bool,
    pub polyline: usize,
}

fn jitter01(a: u64, b: u64) -> f64 {
    let mut z = a
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(b)
        .wrapping_add(0x632be59bd9b4e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Split feature polylines at uniform arc length.
pub fn segment_features(mesh: &TetMesh, h_fea: f64) -> Vec<FeatureSegment> {
    let lines = feature_polylines(mesh);
    let mut out = Vec::new();
    for (li, line) in lines.iter().enumerate() {
        let len = line.length();
        if len <= 0.0 {
            continue;
        }
        let n = (len / h_fea).ceil().max(1.0) as usize;
        for k in 0..n {
            let t0 = len * k as f64 / n as f64;
            let t1 = len * (k + 1) as f64 / n as f64;
            let a = line.point_at(t0);
            let b = line.point_at(t1);
            let midpoint = line.point_at(0.5 * (t0 + t1));
            let frac = 0.2 + 0.6 * jitter01(li as u64, k as u64);
            let insertion_point = line.point_at(t0 + frac * (t1 - t0));
            let normal = nearest_feature_edge_normal(mesh, &midpoint);
            out.push(FeatureSegment {
                a,
                b,
                midpoint,
                insertion_point,
                normal,
                convex: line.convex,
                polyline: li,
            });
        }
    }
    out
}

fn nearest_feature_edge_normal(mesh: &TetMesh, p: &Point) -> Vec3 {
    let mut best = (f64::INFINITY, Vec3::z());
    for fe in &mesh.feature_edges {
        let q = closest_point_on_segment(
            p,
            &mesh.vertices[fe.verts[0]],
            &mesh.vertices[fe.verts[1]],
        );
        let d = (q - p).norm();
        if d < best.0 {
            best = (d, crate::mesh::sample::feature_edge_normal(mesh, fe.verts));
        }
    }
    best.1
}

/// Coverage state of the convex sharp-edge segments.
#[derive(Debug, Clone)]
pub struct FeatureCoverage {
    /// Power-nearest sphere per segment (None when no spheres exist).
    pub owner: Vec<Option<SphereId>>,
    /// Segments whose owner is not a zero-radius feature sphere.
    pub uncovered: Vec<usize>,
}

/// Evaluate convex-segment coverage at segment midpoints.
pub fn feature_coverage(
    spheres: &SphereSet,
    segments: &[FeatureSegment],
) -> FeatureCoverage {
    let mut owner = Vec::with_capacity(segments.len());
    let mut uncovered = Vec::new();
    for (k, seg) in segments.iter().enumerate() {
        if !seg.convex {
            owner.push(None);
            continue;
        }
        let who = spheres.power_nearest(&seg.midpoint).map(|s| s.id);
        let covered = who
            .map(|id| spheres.get(id).kind.is_feature())
            .unwrap_or(false);
        if !covered {
            uncovered.push(k);
        }
        owner.push(who);
    }
    FeatureCoverage { owner, uncovered }
}

/// External feature pass: zero-radius spheres until every convex sharp-edge
/// segment is owned by a feature sphere, corner spheres at every corner, and
/// tangent shrink spheres seeded on uncovered concave segments.
pub fn preserve_external_features(
    mesh: &TetMesh,
    spheres: &SphereSet,
    segments: &[FeatureSegment],
    params: &FeatureParams,
) -> Vec<MedialSphere> {
    let mut out: Vec<MedialSphere> = Vec::new();
    let mut accepted: Vec<Point> = Vec::new();
    let too_close = |p: &Point, accepted: &[Point], tol: f64| {
        accepted.iter().any(|q| (q - p).norm() < tol)
    };

    // Corners first.
    for &cv in &mesh.corners {
        let pos = mesh.vertices[cv];
        let present = spheres
            .active()
            .any(|s| s.kind == SphereKind::Corner && (s.center - pos).norm() < params.eps_dup);
        if !present && !too_close(&pos, &accepted, params.eps_dup) {
            if let Ok(s) = make_feature_sphere(mesh, pos, SphereKind::Corner) {
                accepted.push(pos);
                out.push(s);
            }
        }
    }

    // Convex segments: ownership by zero-radius feature spheres.
    let coverage = feature_coverage(spheres, segments);
    for &k in &coverage.uncovered {
        let seg = &segments[k];
        if too_close(&seg.insertion_point, &accepted, params.eps_dup)
            || spheres.min_center_distance(&seg.insertion_point) < params.eps_dup
        {
            continue;
        }
        if let Ok(s) = make_feature_sphere(mesh, seg.insertion_point, SphereKind::FeatureEdge) {
            accepted.push(seg.insertion_point);
            out.push(s);
        }
    }

    // Concave segments: a sphere tangent at the segment keeps sheets from
    // crossing the concave edge.
    for seg in segments.iter().filter(|s| !s.convex) {
        let covered = spheres.active().any(|s| {
            ((seg.midpoint - s.center).norm() - s.radius).abs() <= params.eps_tan
        });
        if covered {
            continue;
        }
        let Ok(res) = sphere_shrink(mesh, seg.insertion_point, seg.normal, &params.shrink) else {
            continue;
        };
        let c = res.sphere.center;
        if spheres.min_center_distance(&c) < params.eps_dup || too_close(&c, &accepted, params.eps_dup)
        {
            continue;
        }
        accepted.push(c);
        out.push(res.sphere);
    }
    out
}

/// Weighted greedy clustering of unit normals by angular threshold; returns
/// cluster directions sorted by descending weight.
pub fn cluster_normals(items: &[(Vec3, f64)], theta_deg: f64) -> Vec<Vec3> {
    let cos_t = theta_deg.to_radians().cos();
    let mut sorted: Vec<(Vec3, f64)> = items.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut clusters: Vec<(Vec3, f64)> = Vec::new(); // (weighted sum dir, weight)
    for (n, w) in sorted {
        if w <= 0.0 {
            continue;
        }
        let mut placed = false;
        for (dir, weight) in clusters.iter_mut() {
            let mean = *dir / dir.norm().max(1e-30);
            if mean.dot(&n) >= cos_t {
                *dir += n * w;
                *weight += w;
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push((n * w, w));
        }
    }
    clusters.sort_by(|a, b| b.1.total_cmp(&a.1));
    clusters
        .into_iter()
        .map(|(dir, _)| dir / dir.norm().max(1e-30))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SheetRelation {
    SameSheet,
    CrossSheet,
}

/// Do two adjacent spheres lie on the same medial sheet? Compares the
/// tangent-direction clusters of their restricted cells' surface patches.
/// Returns the relation and whether evidence was missing (deep-interior
/// spheres default to same-sheet with a warning).
pub fn check_internal_feature_pair(
    rpd: &Rpd,
    mesh: &TetMesh,
    spheres: &SphereSet,
    i: SphereId,
    j: SphereId,
    theta_sheet_deg: f64,
) -> (SheetRelation, bool) {
    if i == j {
        return (SheetRelation::SameSheet, false);
    }
    let patch = |id: SphereId| -> Vec<(Vec3, f64)> {
        surface_fragments(rpd, mesh, id)
            .iter()
            .map(|f| (f.normal, f.area))
            .collect()
    };
    let pi = patch(i);
    let pj = patch(j);
    if pi.is_empty() || pj.is_empty() {
        return (SheetRelation::SameSheet, true);
    }
    let ci = cluster_normals(&pi, theta_sheet_deg);
    let cj = cluster_normals(&pj, theta_sheet_deg);
    let _ = spheres;
    if ci.len() < 2 || cj.len() < 2 {
        // Not enough tangent evidence to name a sheet.
        return (SheetRelation::SameSheet, true);
    }
    // Greedy pairwise correspondence within the threshold. The spheres lie
    // on a common sheet when they share the two surface regions defining it;
    // a seam sphere legitimately borders the sheet spheres of its incident
    // sheets, so matching the full cluster sets would never terminate.
    let cos_t = theta_sheet_deg.to_radians().cos();
    let mut used = vec![false; cj.len()];
    let mut shared = 0usize;
    for a in &ci {
        for (kb, b) in cj.iter().enumerate() {
            if !used[kb] && a.dot(b) >= cos_t {
                used[kb] = true;
                shared += 1;
                break;
            }
        }
    }
    if shared >= 2 {
        (SheetRelation::SameSheet, false)
    } else {
        (SheetRelation::CrossSheet, false)
    }
}

/// Internal feature pass: walk medial edges in seeded-random order and plant
/// a TN seam sphere between cross-sheet pairs.
pub fn preserve_internal_features(
    rpd: &Rpd,
    mesh: &TetMesh,
    spheres: &SphereSet,
    mm: &MedialMesh,
    params: &FeatureParams,
    seed: u64,
) -> Vec<MedialSphere> {
    // Seam detection only concerns sheet spheres; edges touching zero-radius
    // feature spheres are the external features themselves.
    let mut queue: Vec<(SphereId, SphereId)> = mm
        .edges
        .iter()
        .copied()
        .filter(|&(i, j)| {
            !spheres.get(i).kind.is_feature() && !spheres.get(j).kind.is_feature()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    queue.shuffle(&mut rng);

    let mut out: Vec<MedialSphere> = Vec::new();
    let mut accepted: Vec<Point> = Vec::new();
    for (i, j) in queue {
        let (rel, _warned) = check_internal_feature_pair(rpd, mesh, spheres, i, j, params.theta_sheet_deg);
        if rel == SheetRelation::SameSheet {
            continue;
        }
        let si = spheres.get(i);
        let sj = spheres.get(j);
        let mut planes: Vec<(Point, Vec3)> = si.tangent_points.clone();
        planes.extend(sj.tangent_points.iter().copied());

        let candidate = match optimize_tn_sphere(&planes, None) {
            Ok(mut s) => {
                let clusters = cluster_normals(
                    &s.tangent_points
                        .iter()
                        .filter(|(p, _)| ((p - s.center).norm() - s.radius).abs() <= params.eps_tan)
                        .map(|(_, n)| (*n, 1.0))
                        .collect::<Vec<_>>(),
                    params.theta_sheet_deg,
                );
                let inside = mesh.locate(&s.center, 1e-9).is_some();
                if clusters.len() >= 3 && inside && s.radius > 0.0 {
                    s.kind = SphereKind::Tn(clusters.len() as u32);
                    Some(s)
                } else {
                    None
                }
            }
            Err(_) => None,
        };
        let candidate = candidate.or_else(|| {
            // Fallback: shrink pinned at the surface point nearest the edge
            // midpoint.
            let mid = nalgebra::center(&si.center, &sj.center);
            let (pin, sti) = mesh.nearest_surface_point(&mid);
            sphere_shrink(mesh, pin, mesh.surface_tris[sti].normal, &params.shrink)
                .ok()
                .map(|r| r.sphere)
        });
        let Some(s) = candidate else { continue };
        if spheres.min_center_distance(&s.center) < params.eps_dup
            || accepted.iter().any(|q| (q - s.center).norm() < params.eps_dup)
        {
            continue;
        }
        accepted.push(s.center);
        out.push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::detect_features;
    use crate::synth;

    #[test]
    fn cube_polylines_are_twelve_edges() {
        let mut mesh = synth::voxel_cube(2, 1.0);
        detect_features(&mut mesh, 30.0);
        let lines = feature_polylines(&mesh);
        // Every cube edge is its own polyline (broken at corners).
        assert_eq!(lines.len(), 12);
        assert!(lines.iter().all(|l| !l.closed));
        let expected = 1000.0;
        for l in &lines {
            assert!((l.length() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn cylinder_rims_are_closed_loops() {
        let mut mesh = synth::cylinder(1.0, 2.0, 24);
        detect_features(&mut mesh, 30.0);
        let lines = feature_polylines(&mesh);
        assert_eq!(lines.len(), 2, "two rim circles");
        assert!(lines.iter().all(|l| l.closed));
    }

    #[test]
    fn segmentation_granularity() {
        let mut mesh = synth::voxel_cube(2, 1.0);
        detect_features(&mut mesh, 30.0);
        let h = 0.02 * mesh.bbox_diag;
        let segs = segment_features(&mesh, h);
        // 12 edges x ceil(1000 / 34.6) = 12 x 29.
        assert_eq!(segs.len(), 12 * (1000.0 / h).ceil() as usize);
        for s in &segs {
            assert!((s.b - s.a).norm() <= h * 1.5);
            assert!(s.convex);
        }
    }

    #[test]
    fn normal_clustering_axes() {
        let items = vec![
            (Vec3::z(), 4.0),
            (Vec3::new(0.02, 0.0, 1.0).normalize(), 2.0),
            (-Vec3::z(), 3.0),
            (Vec3::x(), 1.0),
        ];
        let clusters = cluster_normals(&items, 30.0);
        assert_eq!(clusters.len(), 3);
        assert!(clusters[0].dot(&Vec3::z()) > 0.99);
    }

    #[test]
    fn smooth_shape_needs_no_external_insertions() {
        let mut mesh = synth::ball(1.0, 2);
        detect_features(&mut mesh, 30.0);
        let params = FeatureParams::for_mesh(&mesh);
        let segs = segment_features(&mesh, params.h_fea);
        assert!(segs.is_empty());
        let spheres = SphereSet::new();
        let out = preserve_external_features(&mesh, &spheres, &segs, &params);
        assert!(out.is_empty());
    }
}
