//! Medial mesh: dual of the volumetric RPD, thinning, envelope
//! reconstruction, and evaluation metrics.

mod mc_tables;
pub mod recon;

pub use recon::{hausdorff, reconstruct_envelope, TriangleMesh};

use std::collections::{BTreeMap, BTreeSet};

use crate::rpd::{PlaneTag, Rpd};
use crate::sphere::{SphereId, SphereSet};
use crate::topo::ordered;

/// Non-manifold complex of sphere vertices, edges, and triangles dual to the
/// restricted power diagram.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MedialMesh {
    /// Sphere ids with a nonempty restricted cell (ascending).
    pub vertices: Vec<SphereId>,
    /// Canonical (ascending) sphere pairs dual to nonempty RPFs.
    pub edges: Vec<(SphereId, SphereId)>,
    /// Canonical sphere triples dual to nonempty RPEs.
    pub faces: Vec<[SphereId; 3]>,
    /// Dual tets (nonempty RPVs); removed by thinning.
    pub tet_candidates: Vec<[SphereId; 4]>,
    pub tets_pruned: usize,
    /// Tets removed without a free face (should stay 0 on sane inputs).
    pub forced_collapses: usize,
}

impl MedialMesh {
    /// Euler characteristic V - E + F of the (thinned) complex.
    pub fn euler(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Closure: faces reference existing edges, edges existing vertices.
    pub fn closure_ok(&self) -> bool {
        let verts: BTreeSet<SphereId> = self.vertices.iter().copied().collect();
        let edges: BTreeSet<(SphereId, SphereId)> = self.edges.iter().copied().collect();
        self.edges
            .iter()
            .all(|&(a, b)| verts.contains(&a) && verts.contains(&b))
            && self.faces.iter().all(|f| {
                edges.contains(&ordered(f[0], f[1]))
                    && edges.contains(&ordered(f[1], f[2]))
                    && edges.contains(&ordered(f[0], f[2]))
            })
    }

    /// Number of connected components of the vertex/edge graph.
    pub fn n_components(&self) -> usize {
        if self.vertices.is_empty() {
            return 0;
        }
        let index: BTreeMap<SphereId, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, k))
            .collect();
        let mut uf = crate::topo::cc::UnionFind::new(self.vertices.len());
        for &(a, b) in &self.edges {
            uf.union(index[&a], index[&b]);
        }
        let roots: BTreeSet<usize> = (0..self.vertices.len()).map(|k| uf.find(k)).collect();
        roots.len()
    }
}

/// Extract the dual complex: a vertex per nonempty RPC, an edge per nonempty
/// RPF, a triangle per nonempty RPE, and a tet candidate per RPV. Slivers
/// below the clipping tolerance do not create simplices.
pub fn extract_dual(rpd: &Rpd) -> MedialMesh {
    let area_eps = rpd.eps * rpd.eps;
    let len_eps = rpd.eps;

    let mut vertices: BTreeSet<SphereId> = BTreeSet::new();
    let mut edges: BTreeSet<(SphereId, SphereId)> = BTreeSet::new();
    let mut faces: BTreeSet<[SphereId; 3]> = BTreeSet::new();
    let mut tets: BTreeSet<[SphereId; 4]> = BTreeSet::new();

    for ((i, _t), cell) in &rpd.cells {
        vertices.insert(*i);
        for p in cell.active_planes() {
            if let PlaneTag::Radical(j) = cell.plane(p as usize).tag {
                if cell.facet_area(p) > area_eps {
                    edges.insert(ordered(*i, j));
                }
            }
        }
        for ((ea, eb), (ta, tb)) in cell.active_edges() {
            if let (PlaneTag::Radical(j), PlaneTag::Radical(k)) = (ta, tb) {
                let pts = cell.edge_points(ea, eb);
                if pts.len() == 2 && (pts[1] - pts[0]).norm() > len_eps {
                    let mut f = [*i, j, k];
                    f.sort_unstable();
                    faces.insert(f);
                }
            }
        }
        for (planes, _pos, _pay) in cell.vert_payloads() {
            let radicals: Vec<SphereId> = planes
                .iter()
                .filter_map(|&p| cell.plane(p as usize).tag.radical())
                .collect();
            if radicals.len() == 3 {
                let mut q = [*i, radicals[0], radicals[1], radicals[2]];
                q.sort_unstable();
                tets.insert(q);
            }
        }
    }

    // Closure repair: every face implies its edges and vertices.
    for f in &faces {
        edges.insert(ordered(f[0], f[1]));
        edges.insert(ordered(f[1], f[2]));
        edges.insert(ordered(f[0], f[2]));
    }
    for &(a, b) in &edges {
        vertices.insert(a);
        vertices.insert(b);
    }

    MedialMesh {
        vertices: vertices.into_iter().collect(),
        edges: edges.into_iter().collect(),
        faces: faces.into_iter().collect(),
        tet_candidates: tets.into_iter().collect(),
        tets_pruned: 0,
        forced_collapses: 0,
    }
}

/// Prune dual tets by elementary collapses: remove each tet together with
/// one of its free faces, processing tets by ascending minimum member-sphere
/// radius. Collapses preserve the Euler characteristic and homotopy type of
/// the complex.
pub fn thin_medial_mesh(mm: &mut MedialMesh, spheres: &SphereSet) {
    if mm.tet_candidates.is_empty() {
        return;
    }
    let mut tets: Vec<[SphereId; 4]> = mm.tet_candidates.clone();
    tets.sort_by(|a, b| {
        let ra = a
            .iter()
            .map(|&i| spheres.get(i).radius)
            .fold(f64::INFINITY, f64::min);
        let rb = b
            .iter()
            .map(|&i| spheres.get(i).radius)
            .fold(f64::INFINITY, f64::min);
        ra.total_cmp(&rb).then(a.cmp(b))
    });
    let mut faces: BTreeSet<[SphereId; 3]> = mm.faces.iter().copied().collect();

    let tet_faces = |t: &[SphereId; 4]| -> [[SphereId; 3]; 4] {
        let mut out = [[0; 3]; 4];
        for (skip, face) in out.iter_mut().enumerate() {
            let mut k = 0;
            for (idx, &v) in t.iter().enumerate() {
                if idx != skip {
                    face[k] = v;
                    k += 1;
                }
            }
        }
        out
    };

    while !tets.is_empty() {
        // Face -> #remaining tets containing it.
        let mut face_count: BTreeMap<[SphereId; 3], u32> = BTreeMap::new();
        for t in &tets {
            for f in tet_faces(t) {
                *face_count.entry(f).or_insert(0) += 1;
            }
        }
        let pick = tets.iter().position(|t| {
            tet_faces(t)
                .iter()
                .any(|f| face_count[f] == 1 && faces.contains(f))
        });
        match pick {
            Some(pos) => {
                let t = tets.remove(pos);
                let free = tet_faces(&t)
                    .into_iter()
                    .filter(|f| face_count[f] == 1 && faces.contains(f))
                    .min()
                    .unwrap();
                faces.remove(&free);
                mm.tets_pruned += 1;
            }
            None => {
                // Locked configuration: drop the first tet without a collapse
                // partner. Euler bookkeeping may drift; recorded for stats.
                tets.remove(0);
                mm.tets_pruned += 1;
                mm.forced_collapses += 1;
            }
        }
    }
    mm.faces = faces.into_iter().collect();
    mm.tet_candidates.clear();
}

/// Write the `.ma` text format: `#v #e #f` header, then `v x y z r`,
/// `e i j`, `f i j k` lines with 0-based contiguous indices, in original
/// (de-normalized) model coordinates.
pub fn write_ma(
    mm: &MedialMesh,
    spheres: &SphereSet,
    transform: &crate::mesh::Normalization,
    mut w: impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(
        w,
        "{} {} {}",
        mm.vertices.len(),
        mm.edges.len(),
        mm.faces.len()
    )?;
    let index: BTreeMap<SphereId, usize> = mm
        .vertices
        .iter()
        .enumerate()
        .map(|(k, &v)| (v, k))
        .collect();
    for &id in &mm.vertices {
        let s = spheres.get(id);
        let c = transform.to_original(&s.center);
        writeln!(
            w,
            "v {:.17} {:.17} {:.17} {:.17}",
            c.x,
            c.y,
            c.z,
            s.radius / transform.scale
        )?;
    }
    for &(a, b) in &mm.edges {
        writeln!(w, "e {} {}", index[&a], index[&b])?;
    }
    for f in &mm.faces {
        writeln!(w, "f {} {} {}", index[&f[0]], index[&f[1]], index[&f[2]])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{MedialSphere, SphereKind};

    fn dummy_spheres(n: u32) -> SphereSet {
        let mut set = SphereSet::new();
        for k in 0..n {
            set.insert(MedialSphere::new(
                crate::math::Point::new(k as f64, 0.0, 0.0),
                1.0 + k as f64,
                SphereKind::T2,
            ));
        }
        set
    }

    #[test]
    fn thinning_identity_without_tets() {
        let mut mm = MedialMesh {
            vertices: vec![0, 1],
            edges: vec![(0, 1)],
            ..Default::default()
        };
        let spheres = dummy_spheres(2);
        let before = mm.clone();
        thin_medial_mesh(&mut mm, &spheres);
        assert_eq!(mm, before);
    }

    #[test]
    fn isolated_tet_collapses_to_euler_one() {
        let mut mm = MedialMesh {
            vertices: vec![0, 1, 2, 3],
            edges: vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
            faces: vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
            tet_candidates: vec![[0, 1, 2, 3]],
            ..Default::default()
        };
        let spheres = dummy_spheres(4);
        // Pre-thinning V - E + F - C = 1 with the tet counted.
        assert_eq!(mm.euler() - mm.tet_candidates.len() as i64, 1);
        thin_medial_mesh(&mut mm, &spheres);
        assert_eq!(mm.tets_pruned, 1);
        assert_eq!(mm.faces.len(), 3);
        assert_eq!(mm.euler(), 1, "collapse preserves Euler 1");
        assert!(mm.closure_ok());
    }

    #[test]
    fn two_tets_collapse_in_sequence() {
        // Two tets sharing face (1,2,3): V=5, E=9, F=7, C=2 -> Euler 1.
        let mut mm = MedialMesh {
            vertices: vec![0, 1, 2, 3, 4],
            edges: vec![
                (0, 1),
                (0, 2),
                (0, 3),
                (1, 2),
                (1, 3),
                (2, 3),
                (1, 4),
                (2, 4),
                (3, 4),
            ],
            faces: vec![
                [0, 1, 2],
                [0, 1, 3],
                [0, 2, 3],
                [1, 2, 3],
                [1, 2, 4],
                [1, 3, 4],
                [2, 3, 4],
            ],
            tet_candidates: vec![[0, 1, 2, 3], [1, 2, 3, 4]],
            ..Default::default()
        };
        let spheres = dummy_spheres(5);
        thin_medial_mesh(&mut mm, &spheres);
        assert_eq!(mm.tets_pruned, 2);
        assert_eq!(mm.forced_collapses, 0);
        // The shared face goes with the second collapse: 7 - 2 = 5 faces.
        assert_eq!(mm.faces.len(), 5);
        assert_eq!(mm.euler(), 1);
        assert!(mm.closure_ok());
        // The shared face must be among the removed ones.
        assert!(!mm.faces.contains(&[1, 2, 3]));
    }
}
