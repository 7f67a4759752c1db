//! Sharp-feature detection on the boundary surface.

use std::collections::HashMap;

use super::{FeatureEdge, TetMesh};

/// Map each surface edge to the (one or two) surface triangles bounding it.
fn surface_edge_map(mesh: &TetMesh) -> HashMap<[usize; 2], Vec<usize>> {
    let mut map: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
    for (si, st) in mesh.surface_tris.iter().enumerate() {
        for k in 0..3 {
            let mut e = [st.verts[k], st.verts[(k + 1) % 3]];
            e.sort_unstable();
            map.entry(e).or_default().push(si);
        }
    }
    map
}

/// Convexity of the solid across surface edge (a, b): true when the dihedral
/// angle measured inside the solid is below pi. Returns None when (a, b) is
/// not a surface edge.
pub(super) fn edge_is_convex(mesh: &TetMesh, a: usize, b: usize) -> Option<bool> {
    let e = if a < b { [a, b] } else { [b, a] };
    let map = surface_edge_map(mesh);
    let tris = map.get(&e)?;
    if tris.len() != 2 {
        return None;
    }
    Some(convexity(mesh, e, tris[0], tris[1]))
}

fn convexity(mesh: &TetMesh, edge: [usize; 2], s1: usize, s2: usize) -> bool {
    let t1 = &mesh.surface_tris[s1];
    let t2 = &mesh.surface_tris[s2];
    let apex2 = t2
        .verts
        .iter()
        .copied()
        .find(|v| !edge.contains(v))
        .unwrap();
    // Convex edge: the far vertex of the other face lies behind this face's
    // outward plane.
    let d = t1
        .normal
        .dot(&(mesh.vertices[apex2] - mesh.vertices[edge[0]]));
    d < 0.0
}

/// Detect sharp edges and corners.
///
/// An edge is sharp when its dihedral angle deviates from pi by more than
/// `angle_threshold_deg`. A vertex is a corner when at least 3 sharp edges
/// meet there, or exactly 2 whose direction change exceeds the threshold.
pub fn detect_features(mesh: &mut TetMesh, angle_threshold_deg: f64) {
    assert!(
        angle_threshold_deg > 0.0 && angle_threshold_deg < 180.0,
        "threshold must be in (0, 180)"
    );
    let threshold_rad = angle_threshold_deg.to_radians();
    let map = surface_edge_map(mesh);

    let mut feature_edges: Vec<FeatureEdge> = Vec::new();
    for (&e, tris) in &map {
        debug_assert_eq!(tris.len(), 2);
        let n1 = mesh.surface_tris[tris[0]].normal;
        let n2 = mesh.surface_tris[tris[1]].normal;
        let deviation = n1.dot(&n2).clamp(-1.0, 1.0).acos();
        if deviation > threshold_rad {
            feature_edges.push(FeatureEdge {
                verts: e,
                convex: convexity(mesh, e, tris[0], tris[1]),
            });
        }
    }
    feature_edges.sort_by_key(|f| f.verts);

    // Corners.
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, fe) in feature_edges.iter().enumerate() {
        incident.entry(fe.verts[0]).or_default().push(i);
        incident.entry(fe.verts[1]).or_default().push(i);
    }
    let mut corners = Vec::new();
    for (&v, edges) in &incident {
        let is_corner = match edges.len() {
            0 | 1 => false,
            2 => {
                let other = |ei: usize| -> usize {
                    let fe = &feature_edges[ei];
                    if fe.verts[0] == v {
                        fe.verts[1]
                    } else {
                        fe.verts[0]
                    }
                };
                let a = other(edges[0]);
                let b = other(edges[1]);
                // Turn angle of the polyline a -> v -> b.
                let incoming = (mesh.vertices[v] - mesh.vertices[a]).normalize();
                let outgoing = (mesh.vertices[b] - mesh.vertices[v]).normalize();
                incoming.dot(&outgoing).clamp(-1.0, 1.0).acos() > threshold_rad
            }
            _ => true,
        };
        if is_corner {
            corners.push(v);
        }
    }
    corners.sort_unstable();

    mesh.feature_edges = feature_edges;
    mesh.corners = corners;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn smooth_ball_has_no_features() {
        let mut mesh = synth::ball(1.0, 3);
        detect_features(&mut mesh, 30.0);
        assert!(mesh.feature_edges.is_empty());
        assert!(mesh.corners.is_empty());
    }

    #[test]
    fn cube_has_twelve_convex_edges_and_eight_corners() {
        let mut mesh = synth::cube_five_tets();
        detect_features(&mut mesh, 30.0);
        // The 5-tet cube has face diagonals on the surface; only the 12
        // geometric cube edges are sharp.
        assert_eq!(mesh.feature_edges.len(), 12);
        assert!(mesh.feature_edges.iter().all(|f| f.convex));
        assert_eq!(mesh.corners.len(), 8);
    }

    #[test]
    fn voxel_cube_features() {
        let mut mesh = synth::voxel_cube(2, 1.0);
        detect_features(&mut mesh, 30.0);
        // Sharp edges are exactly the segments along the 12 cube edges: 2 per edge.
        assert_eq!(mesh.feature_edges.len(), 24);
        assert!(mesh.feature_edges.iter().all(|f| f.convex));
        assert_eq!(mesh.corners.len(), 8);
    }

    #[test]
    fn l_block_has_concave_chain() {
        let mut mesh = synth::l_block(2, 1.0);
        detect_features(&mut mesh, 30.0);
        let concave: Vec<_> = mesh.feature_edges.iter().filter(|f| !f.convex).collect();
        assert!(!concave.is_empty(), "L-block must expose a concave chain");
        assert!(mesh.feature_edges.iter().any(|f| f.convex));
    }

    #[test]
    fn detection_is_renumbering_invariant() {
        use rand::prelude::*;
        let base = synth::voxel_cube(2, 1.0);
        let mut detected_base = base.clone();
        detect_features(&mut detected_base, 30.0);

        // Permute vertices and rebuild.
        let n = base.vertices.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        perm.shuffle(&mut rng);
        let mut inv = vec![0usize; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let verts: Vec<_> = (0..n).map(|i| base.vertices[perm[i]]).collect();
        let tets: Vec<[usize; 4]> = base
            .tets
            .iter()
            .map(|t| [inv[t[0]], inv[t[1]], inv[t[2]], inv[t[3]]])
            .collect();
        let mut remeshed = crate::mesh::TetMesh::build(
            verts.iter().map(|p| base.transform.to_original(p)).collect(),
            tets,
        )
        .unwrap();
        detect_features(&mut remeshed, 30.0);

        let canon = |mesh: &crate::mesh::TetMesh, map: &dyn Fn(usize) -> usize| {
            let mut edges: Vec<([usize; 2], bool)> = mesh
                .feature_edges
                .iter()
                .map(|f| {
                    let mut e = [map(f.verts[0]), map(f.verts[1])];
                    e.sort_unstable();
                    (e, f.convex)
                })
                .collect();
            edges.sort();
            edges
        };
        // Map renumbered indices back through perm.
        assert_eq!(
            canon(&detected_base, &|v| v),
            canon(&remeshed, &|v| perm[v])
        );
        assert_eq!(detected_base.corners.len(), remeshed.corners.len());
    }
}
