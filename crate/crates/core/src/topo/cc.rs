//! Connected-component analysis of restricted elements via union-find over
//! cell fragments.

use std::collections::BTreeMap;

use crate::math::{
    convex_polygon_area, convex_polygon_overlap_area, interval_overlap, Point, Vec3,
};
use crate::mesh::TetMesh;
use crate::rpd::{PlaneTag, Rpd};
use crate::sphere::SphereId;

use super::ordered;

/// Disjoint-set with path compression and union by size.
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] >= self.size[rb] {
            self.parent[rb] = ra;
            self.size[ra] += self.size[rb];
        } else {
            self.parent[ra] = rb;
            self.size[rb] += self.size[ra];
        }
    }
}

/// One connected component of a restricted element.
#[derive(Debug, Clone)]
pub struct Component {
    /// Source tets of the fragments in this component.
    pub tets: Vec<u32>,
    /// Representative points on the boundary surface, with their surface
    /// triangle index.
    pub surface_points: Vec<(Point, usize)>,
    /// Centroid of the fragments (not necessarily on the surface).
    pub centroid: Point,
    /// Total cell volume (restricted-cell components only; 0 for faces and
    /// edges). Distinguishes real components from clipping slivers.
    pub volume: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ElementComponents {
    pub components: Vec<Component>,
}

impl ElementComponents {
    pub fn cc(&self) -> u32 {
        self.components.len() as u32
    }
}

/// Full component analysis for one sphere: its restricted cell, faces, and
/// edges.
#[derive(Debug, Clone)]
pub struct SphereCc {
    pub rpc: ElementComponents,
    pub rpf: BTreeMap<SphereId, ElementComponents>,
    pub rpe: BTreeMap<(SphereId, SphereId), ElementComponents>,
}

/// A piece of the boundary surface belonging to one cell.
#[derive(Debug, Clone)]
pub struct SurfaceFragment {
    pub tet: u32,
    pub surface_tri: usize,
    pub polygon: Vec<Point>,
    pub area: f64,
    pub normal: Vec3,
}

/// Boundary-surface fragments of a sphere's restricted cell.
pub fn surface_fragments(rpd: &Rpd, mesh: &TetMesh, sphere: SphereId) -> Vec<SurfaceFragment> {
    let mut out = Vec::new();
    for (&tet, cell) in rpd.cells_of_sphere(sphere) {
        for p in cell.active_planes() {
            let PlaneTag::TetFace(fid) = cell.plane(p as usize).tag else {
                continue;
            };
            let Some(sti) = mesh.faces[fid as usize].surface else {
                continue;
            };
            let polygon = cell.facet_polygon(p);
            let normal = mesh.surface_tris[sti].normal;
            let area = convex_polygon_area(&polygon, &normal);
            if area <= rpd.eps * rpd.eps {
                continue;
            }
            out.push(SurfaceFragment {
                tet,
                surface_tri: sti,
                polygon,
                area,
                normal,
            });
        }
    }
    out
}

fn polygon_centroid(points: &[Point]) -> Point {
    let sum = points
        .iter()
        .fold(Vec3::zeros(), |acc, p| acc + p.coords);
    Point::from(sum / points.len().max(1) as f64)
}

/// Trace component counts of the restricted cell and each restricted face /
/// edge of `sphere`, with a representative surface point per component.
pub fn restricted_cc(rpd: &Rpd, mesh: &TetMesh, sphere: SphereId) -> SphereCc {
    let cells: Vec<(u32, &crate::rpd::ConvexCell)> = rpd
        .cells_of_sphere(sphere)
        .map(|(&t, c)| (t, c))
        .collect();
    let index_of: BTreeMap<u32, usize> = cells
        .iter()
        .enumerate()
        .map(|(k, (t, _))| (*t, k))
        .collect();
    let area_eps = rpd.eps * rpd.eps;
    let len_eps = rpd.eps;

    // ---- RPC: merge cells sharing an interior tet-face polygon. ----
    let mut uf = UnionFind::new(cells.len());
    for (k, (t, cell)) in cells.iter().enumerate() {
        for p in cell.active_planes() {
            let PlaneTag::TetFace(fid) = cell.plane(p as usize).tag else {
                continue;
            };
            let face = &mesh.faces[fid as usize];
            if face.n_tets != 2 {
                continue;
            }
            let other_tet = if face.tets[0] == *t as usize {
                face.tets[1]
            } else {
                face.tets[0]
            } as u32;
            let Some(&k2) = index_of.get(&other_tet) else {
                continue;
            };
            if k2 <= k {
                continue; // handle each pair once
            }
            let other_cell = cells[k2].1;
            let Some(p2) = other_cell.plane_by_tag(PlaneTag::TetFace(fid)) else {
                continue;
            };
            let poly_a = cell.facet_polygon(p);
            let poly_b = other_cell.facet_polygon(p2);
            let n = cell.plane(p as usize).normal;
            if convex_polygon_overlap_area(&poly_a, &poly_b, &n) > area_eps {
                uf.union(k, k2);
            }
        }
    }
    let rpc = collect_components(rpd, mesh, &cells, &mut uf, |_cell| true);

    // ---- RPF per neighbor: fragments are radical facets. ----
    let mut rpf_keys: Vec<SphereId> = Vec::new();
    for (_, cell) in &cells {
        for p in cell.active_planes() {
            if let PlaneTag::Radical(j) = cell.plane(p as usize).tag {
                if !rpf_keys.contains(&j) {
                    rpf_keys.push(j);
                }
            }
        }
    }
    rpf_keys.sort_unstable();
    let mut rpf = BTreeMap::new();
    for j in rpf_keys {
        rpf.insert(j, rpf_components(rpd, mesh, &cells, &index_of, j, len_eps));
    }

    // ---- RPE per neighbor pair: fragments are radical-radical edges. ----
    let mut rpe_keys: Vec<(SphereId, SphereId)> = Vec::new();
    for (_, cell) in &cells {
        for (_, (ta, tb)) in cell.active_edges() {
            if let (PlaneTag::Radical(a), PlaneTag::Radical(b)) = (ta, tb) {
                let key = ordered(a, b);
                if !rpe_keys.contains(&key) {
                    rpe_keys.push(key);
                }
            }
        }
    }
    rpe_keys.sort_unstable();
    let mut rpe = BTreeMap::new();
    for key in rpe_keys {
        rpe.insert(key, rpe_components(rpd, mesh, &cells, &index_of, key));
    }

    SphereCc { rpc, rpf, rpe }
}

fn collect_components(
    rpd: &Rpd,
    mesh: &TetMesh,
    cells: &[(u32, &crate::rpd::ConvexCell)],
    uf: &mut UnionFind,
    _keep: impl Fn(&crate::rpd::ConvexCell) -> bool,
) -> ElementComponents {
    let mut by_root: BTreeMap<usize, Component> = BTreeMap::new();
    for (k, (t, cell)) in cells.iter().enumerate() {
        let root = uf.find(k);
        let comp = by_root.entry(root).or_insert_with(|| Component {
            tets: Vec::new(),
            surface_points: Vec::new(),
            centroid: Point::origin(),
            volume: 0.0,
        });
        comp.tets.push(*t);
        comp.volume += cell.volume();
        for p in cell.active_planes() {
            let PlaneTag::TetFace(fid) = cell.plane(p as usize).tag else {
                continue;
            };
            let Some(sti) = mesh.faces[fid as usize].surface else {
                continue;
            };
            let poly = cell.facet_polygon(p);
            let area = convex_polygon_area(&poly, &mesh.surface_tris[sti].normal);
            if area > rpd.eps * rpd.eps {
                comp.surface_points.push((polygon_centroid(&poly), sti));
            }
        }
    }
    let mut components: Vec<Component> = by_root.into_values().collect();
    for comp in &mut components {
        let mut acc = Vec3::zeros();
        let mut n = 0usize;
        for &t in &comp.tets {
            if let Some(c) = rpd.cells.get(&(cells_owner(cells), t)) {
                if let Some(cen) = c.vertex_centroid() {
                    acc += cen.coords;
                    n += 1;
                }
            }
        }
        if n > 0 {
            comp.centroid = Point::from(acc / n as f64);
        } else if let Some(&t) = comp.tets.first() {
            comp.centroid = {
                let tet = mesh.tets[t as usize];
                let sum = tet
                    .iter()
                    .fold(Vec3::zeros(), |acc, &v| acc + mesh.vertices[v].coords);
                Point::from(sum / 4.0)
            };
        }
    }
    ElementComponents { components }
}

fn cells_owner(cells: &[(u32, &crate::rpd::ConvexCell)]) -> SphereId {
    cells.first().map(|(_, c)| c.owner).unwrap_or(u32::MAX)
}

fn rpf_components(
    rpd: &Rpd,
    mesh: &TetMesh,
    cells: &[(u32, &crate::rpd::ConvexCell)],
    index_of: &BTreeMap<u32, usize>,
    j: SphereId,
    len_eps: f64,
) -> ElementComponents {
    // Fragments: cells with an active radical(j) facet.
    let frags: Vec<(usize, u16)> = cells
        .iter()
        .enumerate()
        .filter_map(|(k, (_, cell))| {
            cell.plane_by_tag(PlaneTag::Radical(j)).and_then(|p| {
                if cell.facet_points(p).len() >= 3 {
                    Some((k, p))
                } else {
                    None
                }
            })
        })
        .collect();
    let frag_index: BTreeMap<usize, usize> = frags
        .iter()
        .enumerate()
        .map(|(fi, (k, _))| (*k, fi))
        .collect();
    let mut uf = UnionFind::new(frags.len());

    for (fi, &(k, _p)) in frags.iter().enumerate() {
        let (t, cell) = cells[k];
        // Border edges of this fragment on interior tet faces link to the
        // fragment across that face.
        for ((ea, eb), (ta, tb)) in cell.active_edges() {
            let (fid, is_this_radical) = match (ta, tb) {
                (PlaneTag::Radical(r), PlaneTag::TetFace(f)) if r == j => (f, true),
                (PlaneTag::TetFace(f), PlaneTag::Radical(r)) if r == j => (f, true),
                _ => (0, false),
            };
            if !is_this_radical {
                continue;
            }
            let face = &mesh.faces[fid as usize];
            if face.n_tets != 2 {
                continue;
            }
            let other_tet = if face.tets[0] == t as usize {
                face.tets[1]
            } else {
                face.tets[0]
            } as u32;
            let Some(&k2) = index_of.get(&other_tet) else {
                continue;
            };
            let Some(&fi2) = frag_index.get(&k2) else {
                continue;
            };
            if fi2 <= fi {
                continue;
            }
            // Overlapping collinear border segments merge the fragments.
            let seg_a = cell.edge_points(ea, eb);
            let other_cell = cells[k2].1;
            let seg_b = segment_with_tags(
                other_cell,
                PlaneTag::Radical(j),
                PlaneTag::TetFace(fid),
            );
            if let (2, Some(sb)) = (seg_a.len(), seg_b) {
                let dir = seg_a[1] - seg_a[0];
                let len = dir.norm();
                if len < len_eps {
                    continue;
                }
                let d = dir / len;
                let t0 = 0.0;
                let t1 = len;
                let s0 = d.dot(&(sb[0] - seg_a[0]));
                let s1 = d.dot(&(sb[1] - seg_a[0]));
                if interval_overlap((t0, t1), (s0, s1)) > len_eps {
                    uf.union(fi, fi2);
                }
            }
        }
    }

    let mut by_root: BTreeMap<usize, Component> = BTreeMap::new();
    for (fi, &(k, p)) in frags.iter().enumerate() {
        let root = uf.find(fi);
        let (t, cell) = cells[k];
        let comp = by_root.entry(root).or_insert_with(|| Component {
            tets: Vec::new(),
            surface_points: Vec::new(),
            centroid: Point::origin(),
            volume: 0.0,
        });
        comp.tets.push(t);
        // Surface evidence: border edges on boundary tet faces.
        for ((ea, eb), (ta, tb)) in cell.active_edges() {
            let fid = match (ta, tb) {
                (PlaneTag::Radical(r), PlaneTag::TetFace(f)) if r == j => f,
                (PlaneTag::TetFace(f), PlaneTag::Radical(r)) if r == j => f,
                _ => continue,
            };
            if let Some(sti) = mesh.faces[fid as usize].surface {
                let seg = cell.edge_points(ea, eb);
                if seg.len() == 2 {
                    comp.surface_points
                        .push((nalgebra::center(&seg[0], &seg[1]), sti));
                }
            }
        }
        let poly = cell.facet_points(p);
        comp.centroid = polygon_centroid(&poly);
    }
    let _ = rpd;
    ElementComponents {
        components: by_root.into_values().collect(),
    }
}

fn segment_with_tags(
    cell: &crate::rpd::ConvexCell,
    a: PlaneTag,
    b: PlaneTag,
) -> Option<[Point; 2]> {
    let pa = cell.plane_by_tag(a)?;
    let pb = cell.plane_by_tag(b)?;
    let pts = cell.edge_points(pa.min(pb), pa.max(pb));
    if pts.len() == 2 {
        Some([pts[0], pts[1]])
    } else {
        None
    }
}

fn rpe_components(
    rpd: &Rpd,
    mesh: &TetMesh,
    cells: &[(u32, &crate::rpd::ConvexCell)],
    index_of: &BTreeMap<u32, usize>,
    key: (SphereId, SphereId),
) -> ElementComponents {
    let (j, k_id) = key;
    let frags: Vec<(usize, [Point; 2])> = cells
        .iter()
        .enumerate()
        .filter_map(|(k, (_, cell))| {
            segment_with_tags(cell, PlaneTag::Radical(j), PlaneTag::Radical(k_id))
                .map(|seg| (k, seg))
        })
        .collect();
    let frag_index: BTreeMap<usize, usize> = frags
        .iter()
        .enumerate()
        .map(|(fi, (k, _))| (*k, fi))
        .collect();
    let mut uf = UnionFind::new(frags.len());
    let tol = 10.0 * rpd.eps;

    for (fi, &(k, _)) in frags.iter().enumerate() {
        let (t, cell) = cells[k];
        // Endpoints on interior tet faces connect fragments across tets.
        for p in cell.active_planes() {
            let PlaneTag::TetFace(fid) = cell.plane(p as usize).tag else {
                continue;
            };
            let endpoints = cell.verts_with_tags([
                PlaneTag::Radical(j),
                PlaneTag::Radical(k_id),
                PlaneTag::TetFace(fid),
            ]);
            if endpoints.is_empty() {
                continue;
            }
            let face = &mesh.faces[fid as usize];
            if face.n_tets != 2 {
                continue;
            }
            let other_tet = if face.tets[0] == t as usize {
                face.tets[1]
            } else {
                face.tets[0]
            } as u32;
            let Some(&k2) = index_of.get(&other_tet) else {
                continue;
            };
            let Some(&fi2) = frag_index.get(&k2) else {
                continue;
            };
            if fi2 == fi {
                continue;
            }
            let other_endpoints = cells[k2].1.verts_with_tags([
                PlaneTag::Radical(j),
                PlaneTag::Radical(k_id),
                PlaneTag::TetFace(fid),
            ]);
            let touches = endpoints.iter().any(|a| {
                other_endpoints
                    .iter()
                    .any(|b| (a - b).norm() <= tol)
            });
            if touches {
                uf.union(fi, fi2);
            }
        }
    }

    let mut by_root: BTreeMap<usize, Component> = BTreeMap::new();
    for (fi, &(k, seg)) in frags.iter().enumerate() {
        let root = uf.find(fi);
        let (t, cell) = cells[k];
        let comp = by_root.entry(root).or_insert_with(|| Component {
            tets: Vec::new(),
            surface_points: Vec::new(),
            centroid: Point::origin(),
            volume: 0.0,
        });
        comp.tets.push(t);
        comp.centroid = nalgebra::center(&seg[0], &seg[1]);
        // Surface evidence: endpoint vertices on boundary faces.
        for p in cell.active_planes() {
            let PlaneTag::TetFace(fid) = cell.plane(p as usize).tag else {
                continue;
            };
            let Some(sti) = mesh.faces[fid as usize].surface else {
                continue;
            };
            for v in cell.verts_with_tags([
                PlaneTag::Radical(j),
                PlaneTag::Radical(k_id),
                PlaneTag::TetFace(fid),
            ]) {
                comp.surface_points.push((v, sti));
            }
        }
    }
    ElementComponents {
        components: by_root.into_values().collect(),
    }
}
