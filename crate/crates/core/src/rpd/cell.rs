//! Convex cell representation and the half-space clipping kernel.
//!
//! A cell starts as one tetrahedron of the input mesh (4 half-spaces, 4
//! vertices stored as triplets of half-space indices) and is cut by radical
//! planes one at a time. Fractional Euler payloads ride along: new vertices
//! inherit from the edge they subdivide, new edges from the facet they
//! subdivide, and the fresh facet on the cutting plane inherits the cell's
//! payload.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::math::{order_around_centroid, Point, Vec3};
use crate::sphere::SphereId;

/// Exact rational payload.
pub type Frac = num_rational::Ratio<i128>;

pub fn frac(num: i128, den: i128) -> Frac {
    Frac::new(num, den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PlaneTag {
    /// Face of the source tet, by global face id.
    TetFace(u32),
    /// Radical plane against a neighboring sphere.
    Radical(SphereId),
}

impl PlaneTag {
    pub fn radical(&self) -> Option<SphereId> {
        match self {
            PlaneTag::Radical(j) => Some(*j),
            PlaneTag::TetFace(_) => None,
        }
    }
}

/// Oriented half-space `normal . x + d > 0` (normal is unit, positive side
/// is kept).
#[derive(Debug, Clone, Copy)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub d: f64,
    pub tag: PlaneTag,
}

impl HalfSpace {
    pub fn new(normal: Vec3, d: f64, tag: PlaneTag) -> Self {
        let len = normal.norm();
        debug_assert!(len > 0.0, "degenerate half-space normal");
        HalfSpace {
            normal: normal / len,
            d: d / len,
            tag,
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.normal.dot(&p.coords) + self.d
    }

    pub fn flipped(&self, tag: PlaneTag) -> HalfSpace {
        HalfSpace {
            normal: -self.normal,
            d: -self.d,
            tag,
        }
    }
}

#[derive(Debug, Clone)]
struct CellPlane {
    hs: HalfSpace,
    facet_payload: Frac,
}

#[derive(Debug, Clone)]
struct CellVert {
    /// Ascending indices of the three defining half-spaces.
    planes: [u16; 3],
    pos: Point,
    payload: Frac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipOutcome {
    /// Plane missed the cell; nothing changed (plane not recorded).
    Unchanged,
    /// Cell was cut; plane recorded with a fresh facet.
    Clipped,
    /// Nothing remains on the positive side.
    Emptied,
}

/// Counters for numerically suspect events during clipping.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClipStats {
    pub degenerate_vertices: u64,
}

/// Convex polytope cell owned by one sphere within one source tet.
#[derive(Debug, Clone)]
pub struct ConvexCell {
    pub owner: SphereId,
    pub source_tet: u32,
    planes: Vec<CellPlane>,
    verts: Vec<CellVert>,
    /// Payloads of current edges, keyed by ascending plane-index pairs.
    edge_payloads: BTreeMap<(u16, u16), Frac>,
    cell_payload: Frac,
    /// Snapping tolerance for plane evaluations.
    eps: f64,
    empty: bool,
}

fn sorted3(mut t: [u16; 3]) -> [u16; 3] {
    t.sort_unstable();
    t
}

impl ConvexCell {
    /// Build the initial cell from one tet.
    ///
    /// `face_planes[i]` is the inward half-space of the face opposite local
    /// vertex `i`; `vert_pos`/`vert_payload` follow local vertex order;
    /// `edge_payload[(a, b)]` is keyed by local vertex pairs.
    pub fn from_tet(
        owner: SphereId,
        source_tet: u32,
        face_planes: [HalfSpace; 4],
        face_payloads: [Frac; 4],
        vert_pos: [Point; 4],
        vert_payloads: [Frac; 4],
        edge_payloads_by_verts: &[((usize, usize), Frac)],
        eps: f64,
    ) -> ConvexCell {
        let planes: Vec<CellPlane> = face_planes
            .iter()
            .zip(face_payloads)
            .map(|(hs, payload)| CellPlane {
                hs: *hs,
                facet_payload: payload,
            })
            .collect();
        let verts: Vec<CellVert> = (0..4)
            .map(|i| {
                let mut tri = [0u16; 3];
                let mut k = 0;
                for j in 0..4u16 {
                    if j as usize != i {
                        tri[k] = j;
                        k += 1;
                    }
                }
                CellVert {
                    planes: tri,
                    pos: vert_pos[i],
                    payload: vert_payloads[i],
                }
            })
            .collect();
        let mut edge_payloads = BTreeMap::new();
        for &((a, b), payload) in edge_payloads_by_verts {
            // The edge between local verts a and b lies on the two faces that
            // contain both, i.e. the faces opposite the *other* two vertices.
            let mut pair = [0u16; 2];
            let mut k = 0;
            for j in 0..4usize {
                if j != a && j != b {
                    pair[k] = j as u16;
                    k += 1;
                }
            }
            pair.sort_unstable();
            edge_payloads.insert((pair[0], pair[1]), payload);
        }
        ConvexCell {
            owner,
            source_tet,
            planes,
            verts,
            edge_payloads,
            cell_payload: Frac::new(1, 1),
            eps,
            empty: false,
        }
    }

    /// Axis-aligned box cell with unit payloads; used for unrestricted
    /// power-cell peeling (neighbor computation).
    pub fn from_aabb(owner: SphereId, bbox: &crate::math::Aabb, eps: f64) -> ConvexCell {
        use num_traits::One;
        // Plane axis layout: 0/1 = x min/max, 2/3 = y min/max, 4/5 = z min/max.
        let mk = |axis: usize, max_side: bool| -> CellPlane {
            let mut n = Vec3::zeros();
            n[axis] = if max_side { -1.0 } else { 1.0 };
            let d = if max_side {
                bbox.max[axis]
            } else {
                -bbox.min[axis]
            };
            CellPlane {
                hs: HalfSpace {
                    normal: n,
                    d,
                    tag: PlaneTag::TetFace(u32::MAX - (axis * 2 + max_side as usize) as u32),
                },
                facet_payload: Frac::one(),
            }
        };
        let planes = vec![
            mk(0, false),
            mk(0, true),
            mk(1, false),
            mk(1, true),
            mk(2, false),
            mk(2, true),
        ];
        let mut verts = Vec::with_capacity(8);
        for bx in 0..2u16 {
            for by in 0..2u16 {
                for bz in 0..2u16 {
                    let pos = Point::new(
                        if bx == 1 { bbox.max.x } else { bbox.min.x },
                        if by == 1 { bbox.max.y } else { bbox.min.y },
                        if bz == 1 { bbox.max.z } else { bbox.min.z },
                    );
                    verts.push(CellVert {
                        planes: sorted3([bx, 2 + by, 4 + bz]),
                        pos,
                        payload: Frac::one(),
                    });
                }
            }
        }
        let mut edge_payloads = BTreeMap::new();
        for x in 0..2u16 {
            for y in 2..4u16 {
                edge_payloads.insert((x, y), Frac::one());
            }
            for z in 4..6u16 {
                edge_payloads.insert((x, z), Frac::one());
            }
        }
        for y in 2..4u16 {
            for z in 4..6u16 {
                edge_payloads.insert((y, z), Frac::one());
            }
        }
        ConvexCell {
            owner,
            source_tet: u32::MAX,
            planes,
            verts,
            edge_payloads,
            cell_payload: Frac::one(),
            eps,
            empty: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// Maximum distance from `center` to a vertex, and maximum power value
    /// |v - center|^2 - weight over vertices. Used for the neighbor-peel
    /// early-out bound.
    pub fn radius_and_power_bound(&self, center: &Point, weight: f64) -> (f64, f64) {
        let mut r_max: f64 = 0.0;
        let mut p_max = f64::NEG_INFINITY;
        for v in &self.verts {
            let d2 = (v.pos - center).norm_squared();
            r_max = r_max.max(d2.sqrt());
            p_max = p_max.max(d2 - weight);
        }
        (r_max, p_max)
    }

    pub fn n_verts(&self) -> usize {
        self.verts.len()
    }

    pub fn n_planes(&self) -> usize {
        self.planes.len()
    }

    pub fn cell_payload(&self) -> Frac {
        self.cell_payload
    }

    pub fn plane(&self, idx: usize) -> &HalfSpace {
        &self.planes[idx].hs
    }

    pub fn facet_payload(&self, idx: usize) -> Frac {
        self.planes[idx].facet_payload
    }

    pub fn vert_positions(&self) -> impl Iterator<Item = &Point> {
        self.verts.iter().map(|v| &v.pos)
    }

    pub fn vert_payloads(&self) -> impl Iterator<Item = (&[u16; 3], &Point, Frac)> {
        self.verts.iter().map(|v| (&v.planes, &v.pos, v.payload))
    }

    pub fn edge_payload_entries(&self) -> impl Iterator<Item = (&(u16, u16), &Frac)> {
        self.edge_payloads.iter()
    }

    /// Clip by `hs`, keeping the positive side.
    pub fn clip(&mut self, hs: &HalfSpace, stats: &mut ClipStats) -> ClipOutcome {
        if self.empty {
            return ClipOutcome::Emptied;
        }
        let evals: Vec<f64> = self.verts.iter().map(|v| hs.eval(&v.pos)).collect();
        // Symmetric snapping: a vertex is kept iff its eval is >= -eps, and
        // the cell empties only when every vertex is cut. Cells thinner than
        // the band survive as wafers on *both* sides of their plane, keeping
        // the two sides' combinatorics consistent.
        let keep: Vec<bool> = evals.iter().map(|&e| e >= -self.eps).collect();
        if keep.iter().all(|&k| k) {
            return ClipOutcome::Unchanged;
        }
        if !keep.iter().any(|&k| k) {
            self.verts.clear();
            self.edge_payloads.clear();
            self.empty = true;
            return ClipOutcome::Emptied;
        }

        let new_plane_idx = self.planes.len() as u16;
        self.planes.push(CellPlane {
            hs: *hs,
            facet_payload: self.cell_payload,
        });

        // New vertices on cut edges: a kept and a cut endpoint sharing
        // exactly two planes.
        let mut new_verts: Vec<CellVert> = Vec::new();
        let mut seen_pairs: Vec<(u16, u16)> = Vec::new();
        for i in 0..self.verts.len() {
            if !keep[i] {
                continue;
            }
            for j in 0..self.verts.len() {
                if keep[j] {
                    continue;
                }
                let shared = shared_planes(&self.verts[i].planes, &self.verts[j].planes);
                let Some(pair) = shared else { continue };
                if seen_pairs.contains(&pair) {
                    stats.degenerate_vertices += 1;
                    continue;
                }
                let Some(&edge_payload) = self.edge_payloads.get(&pair) else {
                    // Vertex pair on two common planes without a tracked edge:
                    // degenerate contact, skip.
                    stats.degenerate_vertices += 1;
                    continue;
                };
                seen_pairs.push(pair);
                let (ei, ej) = (evals[i], evals[j]);
                let t = ei / (ei - ej);
                let pos = self.verts[i].pos + (self.verts[j].pos - self.verts[i].pos) * t;
                new_verts.push(CellVert {
                    planes: sorted3([pair.0, pair.1, new_plane_idx]),
                    pos,
                    payload: edge_payload,
                });
            }
        }

        // Drop cut vertices.
        let mut idx = 0;
        self.verts.retain(|_| {
            let k = keep[idx];
            idx += 1;
            k
        });

        // New edges on the fresh facet: one per facet plane crossed by at
        // least two new vertices, inheriting that facet's payload.
        let mut plane_hits: BTreeMap<u16, u32> = BTreeMap::new();
        for v in &new_verts {
            for &p in &v.planes {
                if p != new_plane_idx {
                    *plane_hits.entry(p).or_insert(0) += 1;
                }
            }
        }
        for (&p, &hits) in &plane_hits {
            if hits >= 2 {
                let key = if p < new_plane_idx {
                    (p, new_plane_idx)
                } else {
                    (new_plane_idx, p)
                };
                self.edge_payloads
                    .insert(key, self.planes[p as usize].facet_payload);
            }
        }

        self.verts.extend(new_verts);

        // Prune edges that lost their support.
        let mut support: BTreeMap<(u16, u16), u32> = BTreeMap::new();
        for v in &self.verts {
            let [a, b, c] = v.planes;
            for pair in [(a, b), (a, c), (b, c)] {
                *support.entry(pair).or_insert(0) += 1;
            }
        }
        self.edge_payloads
            .retain(|pair, _| support.get(pair).copied().unwrap_or(0) >= 2);

        if self.verts.len() < 4 {
            // A non-degenerate 3-polytope needs at least 4 vertices.
            stats.degenerate_vertices += 1;
        }
        ClipOutcome::Clipped
    }

    /// First plane index carrying `tag`, if any.
    pub fn plane_by_tag(&self, tag: PlaneTag) -> Option<u16> {
        self.planes
            .iter()
            .position(|p| p.hs.tag == tag)
            .map(|i| i as u16)
    }

    /// Active edge keys (plane index pairs) with their tags.
    pub fn active_edges(&self) -> impl Iterator<Item = ((u16, u16), (PlaneTag, PlaneTag))> + '_ {
        self.edge_payloads.keys().map(|&(a, b)| {
            (
                (a, b),
                (self.planes[a as usize].hs.tag, self.planes[b as usize].hs.tag),
            )
        })
    }

    /// Vertices whose triplet carries all three given tags.
    pub fn verts_with_tags(&self, tags: [PlaneTag; 3]) -> Vec<Point> {
        self.verts
            .iter()
            .filter(|v| {
                tags.iter().all(|t| {
                    v.planes
                        .iter()
                        .any(|&p| self.planes[p as usize].hs.tag == *t)
                })
            })
            .map(|v| v.pos)
            .collect()
    }

    /// Plane indices whose facet is combinatorially present (>= 3 incident
    /// vertices).
    pub fn active_planes(&self) -> Vec<u16> {
        let mut counts = vec![0u32; self.planes.len()];
        for v in &self.verts {
            for &p in &v.planes {
                counts[p as usize] += 1;
            }
        }
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c >= 3)
            .map(|(i, _)| i as u16)
            .collect()
    }

    /// Vertices incident to plane `p`, as positions.
    pub fn facet_points(&self, p: u16) -> Vec<Point> {
        self.verts
            .iter()
            .filter(|v| v.planes.contains(&p))
            .map(|v| v.pos)
            .collect()
    }

    /// Facet polygon of plane `p`, ordered counter-clockwise around the
    /// outward facet normal.
    pub fn facet_polygon(&self, p: u16) -> Vec<Point> {
        let pts = self.facet_points(p);
        if pts.len() < 3 {
            return pts;
        }
        let outward = -self.planes[p as usize].hs.normal;
        let order = order_around_centroid(&pts, &outward);
        order.into_iter().map(|i| pts[i]).collect()
    }

    pub fn facet_area(&self, p: u16) -> f64 {
        let pts = self.facet_points(p);
        crate::math::convex_polygon_area(&pts, &self.planes[p as usize].hs.normal)
    }

    /// Endpoints of the edge on plane pair (a, b), if present.
    pub fn edge_points(&self, a: u16, b: u16) -> Vec<Point> {
        self.verts
            .iter()
            .filter(|v| v.planes.contains(&a) && v.planes.contains(&b))
            .map(|v| v.pos)
            .collect()
    }

    /// Volume by the divergence theorem over outward-wound facet fans.
    pub fn volume(&self) -> f64 {
        if self.empty {
            return 0.0;
        }
        let mut six_vol = 0.0;
        for p in self.active_planes() {
            let poly = self.facet_polygon(p);
            if poly.len() < 3 {
                continue;
            }
            for k in 1..poly.len() - 1 {
                six_vol += poly[0]
                    .coords
                    .dot(&poly[k].coords.cross(&poly[k + 1].coords));
            }
        }
        six_vol / 6.0
    }

    /// Per-cell signed payload sum: +verts -edges +facets -cell. Summed over
    /// all cells of one sphere this yields the Euler characteristic of its
    /// restricted power cell.
    pub fn signed_payload_sum(&self) -> Frac {
        if self.empty {
            return Frac::zero();
        }
        let mut sum = Frac::zero();
        for v in &self.verts {
            sum += v.payload;
        }
        for (_, &pay) in self.edge_payloads.iter() {
            sum -= pay;
        }
        for p in self.active_planes() {
            sum += self.planes[p as usize].facet_payload;
        }
        sum -= self.cell_payload;
        sum
    }

    /// Signed payload sum weighted for global conservation: an element shared
    /// with the cells of `k` other spheres (one per radical plane in its key)
    /// contributes `1 / (k + 1)` of its payload.
    pub fn conservation_sum(&self) -> Frac {
        if self.empty {
            return Frac::zero();
        }
        let radical_count = |planes: &[u16]| -> i128 {
            planes
                .iter()
                .filter(|&&p| matches!(self.planes[p as usize].hs.tag, PlaneTag::Radical(_)))
                .count() as i128
        };
        let mut sum = Frac::zero();
        for v in &self.verts {
            sum += v.payload / frac(1 + radical_count(&v.planes), 1);
        }
        for (&(a, b), &pay) in self.edge_payloads.iter() {
            sum -= pay / frac(1 + radical_count(&[a, b]), 1);
        }
        for p in self.active_planes() {
            sum += self.planes[p as usize].facet_payload / frac(1 + radical_count(&[p]), 1);
        }
        sum -= self.cell_payload;
        sum
    }

    /// All vertices satisfy every half-space within tolerance.
    pub fn is_convex_consistent(&self, slack: f64) -> bool {
        self.verts.iter().all(|v| {
            self.planes
                .iter()
                .all(|p| p.hs.eval(&v.pos) >= -self.eps - slack)
        })
    }

    /// Centroid of the cell's vertices.
    pub fn vertex_centroid(&self) -> Option<Point> {
        if self.verts.is_empty() {
            return None;
        }
        let sum = self
            .verts
            .iter()
            .fold(Vec3::zeros(), |acc, v| acc + v.pos.coords);
        Some(Point::from(sum / self.verts.len() as f64))
    }
}

fn shared_planes(a: &[u16; 3], b: &[u16; 3]) -> Option<(u16, u16)> {
    let mut shared = [0u16; 3];
    let mut n = 0;
    for &x in a {
        if b.contains(&x) {
            if n == 3 {
                return None;
            }
            shared[n] = x;
            n += 1;
        }
    }
    if n == 2 {
        Some((shared[0].min(shared[1]), shared[0].max(shared[1])))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn unit_tet_cell(eps: f64) -> ConvexCell {
        // Tet (0,0,0), (1,0,0), (0,1,0), (0,0,1); all payloads 1 (standalone).
        let verts = [
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        // Face i opposite vertex i, inward-positive.
        let n_diag = Vec3::new(-1.0, -1.0, -1.0).normalize();
        let planes = [
            HalfSpace::new(n_diag, -n_diag.dot(&verts[1].coords), PlaneTag::TetFace(0)),
            HalfSpace::new(Vec3::x(), 0.0, PlaneTag::TetFace(1)),
            HalfSpace::new(Vec3::y(), 0.0, PlaneTag::TetFace(2)),
            HalfSpace::new(Vec3::z(), 0.0, PlaneTag::TetFace(3)),
        ];
        let one = Frac::one();
        let edges: Vec<((usize, usize), Frac)> = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
            .iter()
            .map(|&e| (e, one))
            .collect();
        ConvexCell::from_tet(
            0,
            0,
            planes,
            [one; 4],
            verts,
            [one; 4],
            &edges,
            eps,
        )
    }

    #[test]
    fn fresh_tet_is_consistent() {
        let cell = unit_tet_cell(1e-12);
        assert_eq!(cell.n_verts(), 4);
        assert!((cell.volume() - 1.0 / 6.0).abs() < 1e-14);
        assert!(cell.is_convex_consistent(0.0));
        // Standalone tet: signed payload sum = 4 - 6 + 4 - 1 = 1.
        assert_eq!(cell.signed_payload_sum(), Frac::one());
    }

    #[test]
    fn missing_plane_leaves_cell_unchanged() {
        let mut cell = unit_tet_cell(1e-12);
        let mut stats = ClipStats::default();
        let hs = HalfSpace::new(Vec3::x(), 1.0, PlaneTag::Radical(9));
        assert_eq!(cell.clip(&hs, &mut stats), ClipOutcome::Unchanged);
        assert_eq!(cell.n_planes(), 4);
        assert_eq!(cell.signed_payload_sum(), Frac::one());
    }

    #[test]
    fn full_cut_empties_cell() {
        let mut cell = unit_tet_cell(1e-12);
        let mut stats = ClipStats::default();
        let hs = HalfSpace::new(-Vec3::x(), -1.0, PlaneTag::Radical(9));
        assert_eq!(cell.clip(&hs, &mut stats), ClipOutcome::Emptied);
        assert!(cell.is_empty());
        assert_eq!(cell.volume(), 0.0);
    }

    #[test]
    fn generic_cut_preserves_conservation_sum() {
        // Clip the standalone tet by a generic plane; the two halves of the
        // subdivided complex must sum (with interface weighting) to Euler 1.
        let mut stats = ClipStats::default();
        let n = Vec3::new(0.3, 0.5, 0.8).normalize();
        let d = -n.dot(&Vec3::new(0.15, 0.2, 0.1));
        let hs_a = HalfSpace::new(n, d, PlaneTag::Radical(1));
        let hs_b = hs_a.flipped(PlaneTag::Radical(0));

        let mut side_a = unit_tet_cell(1e-12);
        let mut side_b = unit_tet_cell(1e-12);
        assert_eq!(side_a.clip(&hs_a, &mut stats), ClipOutcome::Clipped);
        assert_eq!(side_b.clip(&hs_b, &mut stats), ClipOutcome::Clipped);

        let total = side_a.conservation_sum() + side_b.conservation_sum();
        assert_eq!(total, Frac::one(), "conservation sum must stay 1");

        // Volumes partition the tet.
        let vol = side_a.volume() + side_b.volume();
        assert!((vol - 1.0 / 6.0).abs() < 1e-12);

        // Each standalone half is a convex ball: signed payload sum may be
        // fractional per piece, but each piece is consistent.
        assert!(side_a.is_convex_consistent(1e-12));
        assert!(side_b.is_convex_consistent(1e-12));
    }

    #[test]
    fn three_site_pinwheel_keeps_conservation() {
        // Three equal-weight sites inside the tet: a genuine power-diagram
        // pinwheel where each pair shares exactly one facet.
        let sites = [
            Point::new(0.30, 0.10, 0.10),
            Point::new(0.05, 0.25, 0.05),
            Point::new(0.10, 0.05, 0.35),
        ];
        // Bisector keeping the side of `a`: 2(a-b).x + |b|^2 - |a|^2 > 0.
        let bisector = |a: &Point, b: &Point, tag: PlaneTag| {
            HalfSpace::new(
                (a.coords - b.coords) * 2.0,
                b.coords.norm_squared() - a.coords.norm_squared(),
                tag,
            )
        };
        let mut stats = ClipStats::default();
        let mut cells = Vec::new();
        for i in 0..3usize {
            let mut cell = unit_tet_cell(1e-12);
            for j in 0..3usize {
                if i != j {
                    cell.clip(
                        &bisector(&sites[i], &sites[j], PlaneTag::Radical(j as u32)),
                        &mut stats,
                    );
                }
            }
            cells.push(cell);
        }
        let total: Frac = cells.iter().map(|c| c.conservation_sum()).sum();
        assert_eq!(total, Frac::one());

        let vol: f64 = cells.iter().map(|c| c.volume()).sum();
        assert!((vol - 1.0 / 6.0).abs() < 1e-12);
        assert!(cells.iter().all(|c| c.is_convex_consistent(1e-12)));
    }
}
