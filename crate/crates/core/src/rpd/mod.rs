//! Volumetric restricted power diagram: sphere neighbor sets, tet-sphere
//! relation filtering, per-tet convex-cell clipping by radical planes, and
//! partial updates on sphere insertion.

pub mod cell;
pub mod neighbors;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::math::{Aabb, Point};
use crate::mesh::TetMesh;
use crate::sphere::{MedialSphere, SphereId, SphereSet};
use crate::topo::TetPayloads;

pub use cell::{frac, ClipOutcome, ClipStats, ConvexCell, Frac, HalfSpace, PlaneTag};
pub use neighbors::{compute_sphere_neighbors, neighbors_bruteforce, NeighborMap};

#[derive(Debug, thiserror::Error)]
pub enum RpdError {
    #[error("spheres {0} and {1} have coincident centers (duplicate sphere)")]
    CoincidentCenters(SphereId, SphereId),
}

/// Symbolic perturbation scale for sphere weights, in squared normalized
/// units. Symmetric inputs (feature spheres on grid-aligned edges, mirrored
/// centers) otherwise produce exact power ties that break the combinatorial
/// consistency of independently clipped cells; a deterministic per-id weight
/// offset makes every configuration generic. Cell boundaries move by at most
/// `PERT / (2 min-center-distance)`, far below every tolerance in use, and
/// only weight *differences* enter the diagram, so the equal-radius /
/// zero-radius degeneration equivalence is preserved exactly.
const WEIGHT_PERT: f64 = 1e-7 * crate::mesh::NORMALIZED_EXTENT * crate::mesh::NORMALIZED_EXTENT;

fn hash01(id: SphereId) -> f64 {
    // splitmix64 finalizer.
    let mut z = (id as u64).wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Perturbed power weight of a sphere inside the RPD engine.
pub(crate) fn site_weight(s: &MedialSphere) -> f64 {
    s.radius * s.radius + WEIGHT_PERT * hash01(s.id)
}

/// Power distance under the perturbed engine weights.
pub(crate) fn site_power(s: &MedialSphere, p: &Point) -> f64 {
    (p - s.center).norm_squared() - site_weight(s)
}

fn radical_plane_with_weights(
    mi: &MedialSphere,
    mj: &MedialSphere,
    wi: f64,
    wj: f64,
) -> Result<HalfSpace, RpdError> {
    let a = (mi.center - mj.center) * 2.0;
    if a.norm_squared() < 1e-24 {
        return Err(RpdError::CoincidentCenters(mi.id, mj.id));
    }
    let d = wi - wj - mi.center.coords.norm_squared() + mj.center.coords.norm_squared();
    Ok(HalfSpace::new(a, d, PlaneTag::Radical(mj.id)))
}

/// Radical plane between two spheres; the positive side is power-closer to
/// `mi`: `2 (ci - cj) . x + (ri^2 - |ci|^2 + |cj|^2 - rj^2) > 0`.
pub fn radical_plane(mi: &MedialSphere, mj: &MedialSphere) -> Result<HalfSpace, RpdError> {
    radical_plane_with_weights(mi, mj, mi.radius * mi.radius, mj.radius * mj.radius)
}

/// Engine variant of [`radical_plane`], computed once per unordered pair
/// under the perturbed weights: for `id(mi) > id(mj)` the canonical
/// `(mj, mi)` plane is negated exactly, so both sides of a facet clip
/// against bit-identical coefficients.
pub fn radical_plane_canonical(mi: &MedialSphere, mj: &MedialSphere) -> HalfSpace {
    if mi.id <= mj.id {
        radical_plane_with_weights(mi, mj, site_weight(mi), site_weight(mj))
            .expect("duplicate sphere centers must be deduplicated upstream")
    } else {
        radical_plane_with_weights(mj, mi, site_weight(mj), site_weight(mi))
            .expect("duplicate sphere centers must be deduplicated upstream")
            .flipped(PlaneTag::Radical(mj.id))
    }
}

/// Tet-sphere relation filter: the tet may intersect the restricted power
/// cell of `mi` unless some neighbor beats `mi` at every tet vertex. The
/// counter over neighbors uses a strict comparison; boundary-coincident
/// vertices only make the filter over-include.
pub fn tet_relates_to_sphere(
    mesh: &TetMesh,
    spheres: &SphereSet,
    i: SphereId,
    neighbors_of_i: &BTreeSet<SphereId>,
    tet: usize,
) -> bool {
    let si = spheres.get(i);
    let verts = mesh.tets[tet];
    let mut d = 0usize;
    for &j in neighbors_of_i {
        let sj = spheres.get(j);
        let mut any = false;
        for &v in &verts {
            let p = &mesh.vertices[v];
            if site_power(si, p) < site_power(sj, p) {
                any = true;
                break;
            }
        }
        if any {
            d += 1;
        } else {
            return false;
        }
    }
    d == neighbors_of_i.len()
}

/// The restricted power diagram state.
#[derive(Debug, Clone)]
pub struct Rpd {
    /// Nonempty clipped cells keyed by (sphere id, tet index).
    pub cells: BTreeMap<(SphereId, u32), ConvexCell>,
    /// Regular-triangulation adjacency (symmetric), with hidden spheres.
    pub neighbors: NeighborMap,
    /// Per tet, the spheres whose cells may reach it (over-approximation).
    pub relations: Vec<BTreeSet<SphereId>>,
    /// Clipping tolerance (1e-9 x bbox diagonal).
    pub eps: f64,
    /// Number of RPD computations performed (full or partial).
    pub n_updates: u32,
    pub clip_stats: ClipStats,
}

impl Rpd {
    /// Full computation over all active spheres.
    pub fn compute(mesh: &TetMesh, payloads: &TetPayloads, spheres: &SphereSet) -> Rpd {
        let eps = 1e-9 * mesh.bbox_diag;
        let mut rpd = Rpd {
            cells: BTreeMap::new(),
            neighbors: NeighborMap::default(),
            relations: vec![BTreeSet::new(); mesh.tets.len()],
            eps,
            n_updates: 0,
            clip_stats: ClipStats::default(),
        };
        let all: BTreeSet<SphereId> = spheres.active().map(|s| s.id).collect();
        rpd.refresh(mesh, payloads, spheres, &all);
        rpd
    }

    /// Partial update after inserting `new_ids`: recomputes neighbor sets,
    /// then re-clips only the spheres whose neighbor graph changed. Cells of
    /// unaffected spheres are reused untouched (bit-identical).
    pub fn update_partial(
        &mut self,
        mesh: &TetMesh,
        payloads: &TetPayloads,
        spheres: &SphereSet,
        new_ids: &BTreeSet<SphereId>,
    ) {
        if new_ids.is_empty() {
            return;
        }
        let old_neighbors = std::mem::take(&mut self.neighbors);
        let domain = Aabb::from_points(mesh.vertices.iter());
        let fresh = compute_sphere_neighbors(spheres, &domain, self.eps);

        let mut dirty: BTreeSet<SphereId> = new_ids.clone();
        for (&i, nb) in &fresh.map {
            if new_ids.contains(&i) {
                continue;
            }
            let nb_changed = old_neighbors.map.get(&i).map(|old| old != nb).unwrap_or(true);
            let hidden_changed =
                old_neighbors.hidden.contains(&i) != fresh.hidden.contains(&i);
            if nb.intersection(new_ids).next().is_some() || nb_changed || hidden_changed {
                dirty.insert(i);
            }
        }
        self.neighbors = fresh;
        self.rebuild_dirty(mesh, payloads, spheres, &dirty);
        self.n_updates += 1;
    }

    /// Recompute neighbors for everyone and rebuild `to_build`.
    fn refresh(
        &mut self,
        mesh: &TetMesh,
        payloads: &TetPayloads,
        spheres: &SphereSet,
        to_build: &BTreeSet<SphereId>,
    ) {
        let domain = Aabb::from_points(mesh.vertices.iter());
        self.neighbors = compute_sphere_neighbors(spheres, &domain, self.eps);
        self.rebuild_dirty(mesh, payloads, spheres, to_build);
        self.n_updates += 1;
    }

    fn rebuild_dirty(
        &mut self,
        mesh: &TetMesh,
        payloads: &TetPayloads,
        spheres: &SphereSet,
        dirty: &BTreeSet<SphereId>,
    ) {
        // Drop stale state of dirty spheres.
        for rel in &mut self.relations {
            rel.retain(|s| !dirty.contains(s));
        }
        self.cells
            .retain(|(sphere, _), _| !dirty.contains(sphere));

        // Recompute relations per dirty sphere; hidden spheres own nothing.
        let dirty_vec: Vec<SphereId> = dirty
            .iter()
            .copied()
            .filter(|i| !self.neighbors.hidden.contains(i))
            .collect();
        let per_sphere_tets: Vec<(SphereId, Vec<u32>)> = dirty_vec
            .par_iter()
            .map(|&i| {
                let nb = self.neighbors.map.get(&i).cloned().unwrap_or_default();
                let tets: Vec<u32> = (0..mesh.tets.len())
                    .filter(|&t| tet_relates_to_sphere(mesh, spheres, i, &nb, t))
                    .map(|t| t as u32)
                    .collect();
                (i, tets)
            })
            .collect();
        for (i, tets) in &per_sphere_tets {
            for &t in tets {
                self.relations[t as usize].insert(*i);
            }
        }

        // Clip. The plane list of a cell pairs the owner against *all* of its
        // power neighbors, in ascending neighbor order: the power cell equals
        // the intersection of its neighbor half-spaces only when none is
        // dropped, so the tet-relation filter gates work items, not planes.
        let work: Vec<(SphereId, u32)> = per_sphere_tets
            .iter()
            .flat_map(|(i, tets)| tets.iter().map(move |&t| (*i, t)))
            .collect();
        let results: Vec<((SphereId, u32), ConvexCell, ClipStats)> = work
            .par_iter()
            .map(|&(i, t)| {
                let mut stats = ClipStats::default();
                let si = spheres.get(i);
                let mut cell = build_tet_cell(mesh, payloads, i, t as usize, self.eps);
                if let Some(nb) = self.neighbors.map.get(&i) {
                    for &j in nb {
                        let hs = radical_plane_canonical(si, spheres.get(j));
                        cell.clip(&hs, &mut stats);
                        if cell.is_empty() {
                            break;
                        }
                    }
                }
                ((i, t), cell, stats)
            })
            .collect();
        for ((i, t), cell, stats) in results {
            self.clip_stats.degenerate_vertices += stats.degenerate_vertices;
            if !cell.is_empty() {
                self.cells.insert((i, t), cell);
            }
        }
    }

    /// Ids of active spheres owning at least one nonempty cell.
    pub fn nonempty_spheres(&self) -> BTreeSet<SphereId> {
        self.cells.keys().map(|&(i, _)| i).collect()
    }

    /// Active spheres with no cells at all (hidden / candidate deletions).
    pub fn empty_spheres(&self, spheres: &SphereSet) -> Vec<SphereId> {
        let nonempty = self.nonempty_spheres();
        spheres
            .active()
            .map(|s| s.id)
            .filter(|id| !nonempty.contains(id))
            .collect()
    }

    pub fn cells_of_sphere(&self, i: SphereId) -> impl Iterator<Item = (&u32, &ConvexCell)> {
        self.cells
            .range((i, 0)..=(i, u32::MAX))
            .map(|((_, t), c)| (t, c))
    }

    pub fn volumes_by_sphere(&self) -> BTreeMap<SphereId, f64> {
        let mut out = BTreeMap::new();
        for ((i, _), c) in &self.cells {
            *out.entry(*i).or_insert(0.0) += c.volume();
        }
        out
    }

    /// Largest relative volume error of the per-tet partition.
    pub fn partition_max_rel_error(&self, mesh: &TetMesh) -> f64 {
        let mut per_tet = vec![0.0f64; mesh.tets.len()];
        for ((_, t), c) in &self.cells {
            per_tet[*t as usize] += c.volume();
        }
        let mut worst: f64 = 0.0;
        for (t, &sum) in per_tet.iter().enumerate() {
            let vol = mesh.tet_volume(t);
            worst = worst.max((sum - vol).abs() / vol);
        }
        worst
    }

    /// Exact rational conservation sum over all cells; equals the mesh Euler
    /// characteristic for a consistent diagram.
    pub fn conservation_sum(&self) -> Frac {
        self.cells.values().map(|c| c.conservation_sum()).sum()
    }

    /// Owner of the cell geometrically containing `p` (point-in-cell over the
    /// relations of the containing tet).
    pub fn owner_of_point(&self, mesh: &TetMesh, p: &Point) -> Option<SphereId> {
        let t = mesh.locate(p, 1e-9)? as u32;
        for &i in &self.relations[t as usize] {
            if let Some(cell) = self.cells.get(&(i, t)) {
                let inside = (0..cell.n_planes())
                    .all(|k| cell.plane(k).eval(p) >= -self.eps);
                if inside {
                    return Some(i);
                }
            }
        }
        None
    }
}

/// Exhaustive-oracle clip of one tet against the radical planes of *all*
/// other active spheres (no neighbor or relation filtering). Used by tests
/// to validate the filtered pipeline.
pub fn clip_tet_bruteforce(
    mesh: &TetMesh,
    payloads: &TetPayloads,
    spheres: &SphereSet,
    i: SphereId,
    t: usize,
    eps: f64,
) -> ConvexCell {
    let si = spheres.get(i);
    let mut stats = ClipStats::default();
    let mut cell = build_tet_cell(mesh, payloads, i, t, eps);
    for sj in spheres.active() {
        if sj.id == i {
            continue;
        }
        let hs = radical_plane_canonical(si, sj);
        cell.clip(&hs, &mut stats);
        if cell.is_empty() {
            break;
        }
    }
    cell
}

/// Initial cell of a tet with its fractional Euler payloads.
pub fn build_tet_cell(
    mesh: &TetMesh,
    payloads: &TetPayloads,
    owner: SphereId,
    t: usize,
    eps: f64,
) -> ConvexCell {
    let tet = mesh.tets[t];
    let pos = [
        mesh.vertices[tet[0]],
        mesh.vertices[tet[1]],
        mesh.vertices[tet[2]],
        mesh.vertices[tet[3]],
    ];
    let mut face_planes = Vec::with_capacity(4);
    for li in 0..4 {
        let fid = mesh.tet_faces[t][li];
        // Inward plane through the three face vertices, facing vertex li.
        let fv: Vec<Point> = (0..4).filter(|&lj| lj != li).map(|lj| pos[lj]).collect();
        let mut n = crate::math::tri_normal(&fv[0], &fv[1], &fv[2]);
        if n.dot(&(pos[li] - fv[0])) < 0.0 {
            n = -n;
        }
        let d = -n.dot(&fv[0].coords);
        face_planes.push(HalfSpace::new(n, d, PlaneTag::TetFace(fid as u32)));
    }
    let edge_payloads: Vec<((usize, usize), Frac)> = crate::topo::LOCAL_EDGES
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| ((a, b), payloads.edge[t][k]))
        .collect();
    ConvexCell::from_tet(
        owner,
        t as u32,
        [face_planes[0], face_planes[1], face_planes[2], face_planes[3]],
        payloads.face[t],
        pos,
        payloads.vert[t],
        &edge_payloads,
        eps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{MedialSphere, SphereKind};
    use crate::synth;
    use crate::topo::init_fractional_euler;

    fn sphere(center: [f64; 3], radius: f64) -> MedialSphere {
        MedialSphere::new(Point::new(center[0], center[1], center[2]), radius, SphereKind::T2)
    }

    #[test]
    fn radical_plane_examples() {
        let mut set = SphereSet::new();
        let a = set.insert(sphere([0.0, 0.0, 0.0], 1.0));
        let b = set.insert(sphere([2.0, 0.0, 0.0], 1.0));
        // Equal radii: bisector x = 1, half-space keeps x < 1.
        let hs = radical_plane(set.get(a), set.get(b)).unwrap();
        assert!((hs.normal - crate::math::Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((hs.d - 1.0).abs() < 1e-15);
        assert!(hs.eval(&Point::new(0.5, 3.0, -2.0)) > 0.0);
        assert!(hs.eval(&Point::new(1.5, 3.0, -2.0)) < 0.0);

        // r_i = 1, r_j = 0: plane x = 5/4.
        let mut set2 = SphereSet::new();
        let a2 = set2.insert(sphere([0.0, 0.0, 0.0], 1.0));
        let b2 = set2.insert(sphere([2.0, 0.0, 0.0], 0.0));
        let hs2 = radical_plane(set2.get(a2), set2.get(b2)).unwrap();
        let on_plane = Point::new(1.25, 0.7, -0.3);
        assert!(hs2.eval(&on_plane).abs() < 1e-15);

        // Swapped arguments: same plane, opposite orientation.
        let hs_rev = radical_plane(set2.get(b2), set2.get(a2)).unwrap();
        assert!((hs2.normal + hs_rev.normal).norm() < 1e-15);
        assert!((hs2.d + hs_rev.d).abs() < 1e-15);

        // Coincident centers error.
        let mut set3 = SphereSet::new();
        let a3 = set3.insert(sphere([1.0, 1.0, 1.0], 0.5));
        let b3 = set3.insert(sphere([1.0, 1.0, 1.0], 0.7));
        assert!(radical_plane(set3.get(a3), set3.get(b3)).is_err());
    }

    #[test]
    fn two_spheres_neighbor_each_other() {
        let mesh = synth::voxel_cube(2, 1.0);
        let domain = Aabb::from_points(mesh.vertices.iter());
        let mut set = SphereSet::new();
        set.insert(sphere([300.0, 400.0, 500.0], 50.0));
        set.insert(sphere([700.0, 600.0, 500.0], 80.0));
        let nb = compute_sphere_neighbors(&set, &domain, 1e-9 * mesh.bbox_diag);
        assert!(nb.map[&0].contains(&1));
        assert!(nb.map[&1].contains(&0));
    }

    #[test]
    fn four_sphere_tetrahedron_is_complete_graph() {
        let mesh = synth::voxel_cube(2, 1.0);
        let domain = Aabb::from_points(mesh.vertices.iter());
        let mut set = SphereSet::new();
        let s = 150.0;
        set.insert(sphere([500.0 + s, 500.0 + s, 500.0 + s], 40.0));
        set.insert(sphere([500.0 + s, 500.0 - s, 500.0 - s], 40.0));
        set.insert(sphere([500.0 - s, 500.0 + s, 500.0 - s], 40.0));
        set.insert(sphere([500.0 - s, 500.0 - s, 500.0 + s], 40.0));
        let nb = compute_sphere_neighbors(&set, &domain, 1e-9 * mesh.bbox_diag);
        for i in 0..4u32 {
            assert_eq!(nb.map[&i].len(), 3, "K4 adjacency for sphere {i}");
        }
    }

    #[test]
    fn hidden_sphere_has_empty_cell() {
        // Tiny sphere at the center of a huge one: its power cell is empty.
        let mesh = synth::voxel_cube(2, 1.0);
        let payloads = init_fractional_euler(&mesh);
        let mut set = SphereSet::new();
        set.insert(sphere([500.0, 500.0, 500.0], 400.0));
        set.insert(sphere([510.0, 500.0, 500.0], 1.0));
        set.insert(sphere([100.0, 100.0, 100.0], 90.0));
        let rpd = Rpd::compute(&mesh, &payloads, &set);
        assert!(
            rpd.cells_of_sphere(1).next().is_none(),
            "hidden sphere must own no cells"
        );
        assert_eq!(rpd.empty_spheres(&set), vec![1]);
        // Partition still holds without it.
        assert!(rpd.partition_max_rel_error(&mesh) < 1e-6);
    }

    #[test]
    fn single_sphere_relates_to_every_tet() {
        let mesh = synth::voxel_cube(2, 1.0);
        let mut set = SphereSet::new();
        set.insert(sphere([200.0, 300.0, 400.0], 10.0));
        let empty = BTreeSet::new();
        for t in 0..mesh.tets.len() {
            assert!(tet_relates_to_sphere(&mesh, &set, 0, &empty, t));
        }
    }

    #[test]
    fn dominated_tet_is_filtered() {
        let mesh = synth::voxel_cube(2, 1.0);
        let mut set = SphereSet::new();
        set.insert(sphere([100.0, 100.0, 100.0], 10.0));
        set.insert(sphere([900.0, 900.0, 900.0], 10.0));
        let nb: BTreeSet<SphereId> = [1].into_iter().collect();
        // Any tet in the far corner cell is closer to sphere 1 at all verts.
        let far_tet = (0..mesh.tets.len())
            .find(|&t| {
                mesh.tets[t]
                    .iter()
                    .all(|&v| (0..3).all(|k| mesh.vertices[v][k] >= 499.0))
            })
            .expect("corner tet exists");
        assert!(!tet_relates_to_sphere(&mesh, &set, 0, &nb, far_tet));
    }

    #[test]
    fn cube_split_by_midplane_halves_volume() {
        // Two equal spheres mirrored about x = 500: radical plane x = 500.
        // Chosen off-lattice? 2-cell cube has lattice plane at 500, so use
        // asymmetric sphere placement producing the same midplane avoided;
        // instead use 3-cell cube (lattice at 333/666, midplane at 500).
        let mesh = synth::voxel_cube(3, 1.0);
        let payloads = init_fractional_euler(&mesh);
        let mut set = SphereSet::new();
        set.insert(sphere([300.0, 500.0, 500.0], 60.0));
        set.insert(sphere([700.0, 500.0, 500.0], 60.0));
        let rpd = Rpd::compute(&mesh, &payloads, &set);
        let vols = rpd.volumes_by_sphere();
        let total = mesh.total_volume();
        assert!((vols[&0] - total / 2.0).abs() / total < 1e-9);
        assert!((vols[&1] - total / 2.0).abs() / total < 1e-9);
        assert!(rpd.partition_max_rel_error(&mesh) < 1e-9);
        // Plane misses a tet entirely -> that tet's cell keeps volume.
        assert_eq!(rpd.conservation_sum(), frac(1, 1));
    }

    #[test]
    fn partial_update_is_identity_on_empty_insert() {
        let mesh = synth::voxel_cube(2, 1.0);
        let payloads = init_fractional_euler(&mesh);
        let mut set = SphereSet::new();
        set.insert(sphere([400.0, 500.0, 500.0], 60.0));
        set.insert(sphere([600.0, 500.0, 480.0], 70.0));
        let mut rpd = Rpd::compute(&mesh, &payloads, &set);
        let before: Vec<_> = rpd
            .cells
            .iter()
            .map(|(k, c)| (*k, c.n_verts(), c.volume()))
            .collect();
        let updates_before = rpd.n_updates;
        rpd.update_partial(&mesh, &payloads, &set, &BTreeSet::new());
        let after: Vec<_> = rpd
            .cells
            .iter()
            .map(|(k, c)| (*k, c.n_verts(), c.volume()))
            .collect();
        assert_eq!(before, after);
        assert_eq!(rpd.n_updates, updates_before);
    }
}
