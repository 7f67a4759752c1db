//! Fractional Euler characteristic bookkeeping, connected-component analysis
//! of restricted elements, and the topology check-and-fix loop.

pub mod cc;
mod fix;
pub mod oracle;

pub use cc::{restricted_cc, surface_fragments, ElementComponents, SphereCc, SurfaceFragment};
pub use fix::{
    run_topology_loop,
    check_and_fix_topology, check_topology, FixOutcome, InsertionCause, TopoError, TopoParams,
};

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::mesh::TetMesh;
use crate::rpd::{frac, Frac, PlaneTag, Rpd};
use crate::sphere::SphereId;

/// Local edge order of a tet: vertex index pairs.
pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Per-tet fractional Euler payloads: each element of the tet complex carries
/// `1 / (number of tets sharing it)`.
#[derive(Debug, Clone)]
pub struct TetPayloads {
    /// Per tet, per local vertex.
    pub vert: Vec<[Frac; 4]>,
    /// Per tet, per local edge (order of [`LOCAL_EDGES`]).
    pub edge: Vec<[Frac; 6]>,
    /// Per tet, per local face (face `i` opposite vertex `i`).
    pub face: Vec<[Frac; 4]>,
}

impl TetPayloads {
    /// Signed total (+V -E +F -C) across all tets; equals the mesh Euler
    /// characteristic by construction.
    pub fn signed_total(&self) -> Frac {
        let mut sum = Frac::zero();
        for t in 0..self.vert.len() {
            for v in &self.vert[t] {
                sum += *v;
            }
            for e in &self.edge[t] {
                sum -= *e;
            }
            for f in &self.face[t] {
                sum += *f;
            }
            sum -= frac(1, 1);
        }
        sum
    }
}

/// Assign fractional Euler payloads from the tet-complex valences.
pub fn init_fractional_euler(mesh: &TetMesh) -> TetPayloads {
    let n = mesh.tets.len();
    let mut vert = vec![[Frac::zero(); 4]; n];
    let mut edge = vec![[Frac::zero(); 6]; n];
    let mut face = vec![[Frac::zero(); 4]; n];
    for (t, tet) in mesh.tets.iter().enumerate() {
        for li in 0..4 {
            vert[t][li] = frac(1, mesh.vert_valence[tet[li]] as i128);
            let fid = mesh.tet_faces[t][li];
            face[t][li] = frac(1, mesh.faces[fid].n_tets as i128);
        }
        for (k, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
            let eid = mesh
                .edge_id(tet[a], tet[b])
                .expect("tet edge must be in the edge table");
            edge[t][k] = frac(1, mesh.edges[eid].valence as i128);
        }
    }
    TetPayloads { vert, edge, face }
}

/// Topology summary of one element (restricted cell, face, or edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementTopo {
    pub euler: Frac,
    pub cc: u32,
}

impl ElementTopo {
    pub fn is_disk(&self) -> bool {
        self.cc == 1 && self.euler == frac(1, 1)
    }
}

/// Per-sphere aggregation of restricted elements.
#[derive(Debug, Clone)]
pub struct RestrictedElements {
    pub sphere: SphereId,
    /// Euler of the restricted power cell (3D region).
    pub rpc_euler: Frac,
    /// Euler of each restricted power face, keyed by the neighbor sphere.
    pub rpf_euler: BTreeMap<SphereId, Frac>,
    /// Euler of each restricted power edge, keyed by the neighbor pair
    /// (ascending).
    pub rpe_euler: BTreeMap<(SphereId, SphereId), Frac>,
}

/// Stream the fractional payloads of every cell into per-sphere element
/// sums. No combinatorial extraction happens here: vertices contribute to
/// every radical plane (and plane pair) in their triplet, edges to theirs,
/// facets to their own plane.
pub fn accumulate_euler(rpd: &Rpd) -> BTreeMap<SphereId, RestrictedElements> {
    let mut out: BTreeMap<SphereId, RestrictedElements> = BTreeMap::new();
    for ((i, _t), cell) in &rpd.cells {
        let entry = out.entry(*i).or_insert_with(|| RestrictedElements {
            sphere: *i,
            rpc_euler: Frac::zero(),
            rpf_euler: BTreeMap::new(),
            rpe_euler: BTreeMap::new(),
        });

        entry.rpc_euler += cell.signed_payload_sum();

        // Vertices: + to each incident radical plane and plane pair.
        for (planes, _pos, payload) in cell.vert_payloads() {
            let radicals: Vec<SphereId> = planes
                .iter()
                .filter_map(|&p| cell.plane(p as usize).tag.radical())
                .collect();
            for &j in &radicals {
                *entry.rpf_euler.entry(j).or_insert_with(Frac::zero) += payload;
            }
            for a in 0..radicals.len() {
                for b in (a + 1)..radicals.len() {
                    let key = ordered(radicals[a], radicals[b]);
                    *entry.rpe_euler.entry(key).or_insert_with(Frac::zero) += payload;
                }
            }
        }
        // Edges: - to each incident radical plane; - to radical pairs.
        for (&(a, b), &payload) in cell.edge_payload_entries() {
            let ta = cell.plane(a as usize).tag.radical();
            let tb = cell.plane(b as usize).tag.radical();
            if let Some(j) = ta {
                *entry.rpf_euler.entry(j).or_insert_with(Frac::zero) -= payload;
            }
            if let Some(j) = tb {
                *entry.rpf_euler.entry(j).or_insert_with(Frac::zero) -= payload;
            }
            if let (Some(j), Some(k)) = (ta, tb) {
                *entry.rpe_euler.entry(ordered(j, k)).or_insert_with(Frac::zero) -= payload;
            }
        }
        // Facets: + to their own radical plane.
        for p in cell.active_planes() {
            if let PlaneTag::Radical(j) = cell.plane(p as usize).tag {
                *entry
                    .rpf_euler
                    .entry(j)
                    .or_insert_with(Frac::zero) += cell.facet_payload(p as usize);
            }
        }
    }
    // Prune zero-sum entries of elements that vanished to measure zero.
    for elems in out.values_mut() {
        elems.rpf_euler.retain(|_, e| !e.is_zero());
        elems.rpe_euler.retain(|_, e| !e.is_zero());
    }
    out
}

pub(crate) fn ordered(a: SphereId, b: SphereId) -> (SphereId, SphereId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// One topology violation, with enough evidence to act on it.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TopoViolation {
    pub sphere: SphereId,
    pub element: String,
    pub kind: ViolationKind,
    /// Representative surface point of the offending component, if any.
    pub evidence: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ViolationKind {
    CcNotOne { cc: u32 },
    EulerNotOne,
}

/// Report of all violations found in one pass.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct TopoReport {
    pub violations: Vec<TopoViolation>,
}

impl TopoReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.violations
            .iter()
            .map(|v| serde_json::to_string(v).expect("violation serializes"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{MedialSphere, SphereKind, SphereSet};
    use crate::synth;
    use num_traits::One;

    #[test]
    fn payload_totals_match_mesh_euler() {
        for (mesh, expected) in [
            (synth::single_tet(), 1i64),
            (synth::cube_five_tets(), 1),
            (synth::torus_grid(6, 2, 2, 1.0), 0),
            (synth::genus2_plate(1.0), -1),
        ] {
            let payloads = init_fractional_euler(&mesh);
            assert_eq!(payloads.signed_total(), frac(expected as i128, 1));
            assert_eq!(mesh.mesh_euler(), expected);
        }
    }

    #[test]
    fn two_tets_share_face_payload_halves() {
        // Two tets sharing one face: the shared face carries 1/2 per tet,
        // shared vertices/edges 1/2 each.
        let verts = vec![
            crate::math::Point::new(0.0, 0.0, 0.0),
            crate::math::Point::new(1.0, 0.0, 0.0),
            crate::math::Point::new(0.0, 1.0, 0.0),
            crate::math::Point::new(0.0, 0.0, 1.0),
            crate::math::Point::new(1.0, 1.0, 1.0),
        ];
        let mesh = crate::mesh::TetMesh::build(verts, vec![[0, 1, 2, 3], [1, 2, 3, 4]]).unwrap();
        let payloads = init_fractional_euler(&mesh);
        // Face opposite local vertex 0 of tet 0 is (1,2,3): the shared one.
        assert_eq!(payloads.face[0][0], frac(1, 2));
        // Unshared faces carry 1.
        assert_eq!(payloads.face[0][1], Frac::one());
        // Vertices of the shared face belong to both tets.
        assert_eq!(payloads.vert[0][1], frac(1, 2));
        assert_eq!(payloads.vert[0][0], Frac::one());
        // Edge (1,2) of tet 0 = local edge index 3, shared by both tets.
        assert_eq!(payloads.edge[0][3], frac(1, 2));
        assert_eq!(payloads.signed_total(), Frac::one());
    }

    #[test]
    fn single_sphere_rpc_euler_matches_shape() {
        // A single sphere's RPC is the whole solid: Euler 1 for a ball-like
        // shape, 0 for the torus.
        for (mesh, expected) in [
            (synth::voxel_cube(2, 1.0), frac(1, 1)),
            (synth::torus_grid(6, 2, 2, 1.0), frac(0, 1)),
        ] {
            let payloads = init_fractional_euler(&mesh);
            let mut spheres = SphereSet::new();
            spheres.insert(MedialSphere::new(
                crate::math::Point::new(333.3, 217.9, 128.4),
                40.0,
                SphereKind::T2,
            ));
            let rpd = Rpd::compute(&mesh, &payloads, &spheres);
            let elems = accumulate_euler(&rpd);
            assert_eq!(elems[&0].rpc_euler, expected);
            assert!(elems[&0].rpf_euler.is_empty());
            assert_eq!(rpd.conservation_sum(), frac(mesh.mesh_euler() as i128, 1));
        }
    }
}
