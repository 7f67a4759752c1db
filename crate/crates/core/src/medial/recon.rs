//! Envelope reconstruction by signed-distance contouring (marching cubes)
//! and sampled Hausdorff distances between surface meshes.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::bvh::TriBvh;
use crate::geometry::EnvelopeIndex;
use crate::math::{Aabb, Point, Vec3};
use crate::sphere::SphereSet;

use super::mc_tables::{EDGE_TABLE, TRI_TABLE};
use super::MedialMesh;

/// Plain indexed triangle mesh.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        !counts.is_empty() && counts.values().all(|&c| c == 2)
    }

    /// Euler characteristic V - E + F.
    pub fn euler(&self) -> i64 {
        let mut edges: std::collections::HashSet<(usize, usize)> = Default::default();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn write_obj(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

/// Reconstruct the watertight envelope surface of a medial mesh by marching
/// cubes over the min signed envelope distance on a `resolution`^3 grid.
/// Returns the mesh and a flag warning when some sphere is thinner than two
/// grid cells.
pub fn reconstruct_envelope(
    mm: &MedialMesh,
    spheres: &SphereSet,
    resolution: usize,
) -> (TriangleMesh, bool) {
    let Some(index) = EnvelopeIndex::build(mm, spheres) else {
        return (TriangleMesh::default(), false);
    };
    // Grid covers the envelope with a 2-cell margin.
    let mut bbox = Aabb::empty();
    for &i in &mm.vertices {
        let s = spheres.get(i);
        for k in 0..3 {
            bbox.min[k] = bbox.min[k].min(s.center[k] - s.radius);
            bbox.max[k] = bbox.max[k].max(s.center[k] + s.radius);
        }
    }
    let extent = bbox.max - bbox.min;
    let max_extent = extent.x.max(extent.y).max(extent.z).max(1e-9);
    let cell = max_extent / (resolution.max(4) as f64 - 3.0);
    for k in 0..3 {
        bbox.min[k] -= 2.0 * cell;
    }
    let dims = [
        (extent.x / cell).ceil() as usize + 4,
        (extent.y / cell).ceil() as usize + 4,
        (extent.z / cell).ceil() as usize + 4,
    ];

    let thin_warning = mm
        .vertices
        .iter()
        .any(|&i| spheres.get(i).radius > 0.0 && spheres.get(i).radius < 2.0 * cell);

    // Sample the field at grid points, plane by plane in parallel.
    let nx = dims[0] + 1;
    let ny = dims[1] + 1;
    let nz = dims[2] + 1;
    let field: Vec<f64> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|idx| {
            let i = idx / (ny * nz);
            let j = (idx / nz) % ny;
            let k = idx % nz;
            let p = Point::new(
                bbox.min.x + i as f64 * cell,
                bbox.min.y + j as f64 * cell,
                bbox.min.z + k as f64 * cell,
            );
            let d = index.min_signed_distance(&p, spheres);
            // Nudge exact zeros so cube corners classify strictly.
            if d == 0.0 {
                -1e-12
            } else {
                d
            }
        })
        .collect();
    let at = |i: usize, j: usize, k: usize| field[(i * ny + j) * nz + k];

    // Cube corner offsets and the edges connecting them (classic layout).
    const CORNER: [[usize; 3]; 8] = [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ];
    const EDGE_ENDS: [(usize, usize); 12] = [
        (0, 1),
        (1, 2),
        (2, 3),
        (3, 0),
        (4, 5),
        (5, 6),
        (6, 7),
        (7, 4),
        (0, 4),
        (1, 5),
        (2, 6),
        (3, 7),
    ];

    let mut mesh = TriangleMesh::default();
    // Weld vertices by the (grid point, axis) key of their edge.
    let mut edge_vertex: HashMap<([usize; 3], [usize; 3]), usize> = HashMap::new();

    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let mut cube_index = 0usize;
                let mut values = [0.0f64; 8];
                for (c, off) in CORNER.iter().enumerate() {
                    let v = at(i + off[0], j + off[1], k + off[2]);
                    values[c] = v;
                    if v < 0.0 {
                        cube_index |= 1 << c;
                    }
                }
                if EDGE_TABLE[cube_index] == 0 {
                    continue;
                }
                let mut edge_verts = [usize::MAX; 12];
                for (e, &(a, b)) in EDGE_ENDS.iter().enumerate() {
                    if EDGE_TABLE[cube_index] & (1 << e) == 0 {
                        continue;
                    }
                    let ga = [i + CORNER[a][0], j + CORNER[a][1], k + CORNER[a][2]];
                    let gb = [i + CORNER[b][0], j + CORNER[b][1], k + CORNER[b][2]];
                    let key = (ga.min(gb), ga.max(gb));
                    let idx = *edge_vertex.entry(key).or_insert_with(|| {
                        let (va, vb) = (values[a], values[b]);
                        let t = va / (va - vb);
                        let pa = Point::new(
                            bbox.min.x + ga[0] as f64 * cell,
                            bbox.min.y + ga[1] as f64 * cell,
                            bbox.min.z + ga[2] as f64 * cell,
                        );
                        let pb = Point::new(
                            bbox.min.x + gb[0] as f64 * cell,
                            bbox.min.y + gb[1] as f64 * cell,
                            bbox.min.z + gb[2] as f64 * cell,
                        );
                        mesh.vertices.push(pa + (pb - pa) * t);
                        mesh.vertices.len() - 1
                    });
                    edge_verts[e] = idx;
                }
                let tri_row = &TRI_TABLE[cube_index];
                let mut t = 0;
                while tri_row[t] >= 0 {
                    let tri = [
                        edge_verts[tri_row[t] as usize],
                        edge_verts[tri_row[t + 1] as usize],
                        edge_verts[tri_row[t + 2] as usize],
                    ];
                    if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                        mesh.triangles.push(tri);
                    }
                    t += 3;
                }
            }
        }
    }
    (mesh, thin_warning)
}

/// Sampled one-sided Hausdorff distances between two surface meshes, as
/// percentages of `a`'s bounding-box diagonal: (a -> b, b -> a, max).
pub fn hausdorff(a: &TriangleMesh, b: &TriangleMesh, samples_per_tri: usize) -> (f64, f64, f64) {
    assert!(
        !a.triangles.is_empty() && !b.triangles.is_empty(),
        "hausdorff needs nonempty meshes"
    );
    let diag = a.bbox().diagonal();
    let eps1 = one_sided(a, b, samples_per_tri) / diag * 100.0;
    let eps2 = one_sided(b, a, samples_per_tri) / diag * 100.0;
    (eps1, eps2, eps1.max(eps2))
}

fn one_sided(from: &TriangleMesh, to: &TriangleMesh, samples_per_tri: usize) -> f64 {
    let bvh = TriBvh::build(
        to.triangles
            .iter()
            .map(|t| [to.vertices[t[0]], to.vertices[t[1]], to.vertices[t[2]]])
            .collect(),
    );
    let worst_vert = from
        .vertices
        .par_iter()
        .map(|p| (bvh.nearest(p).0 - p).norm())
        .reduce(|| 0.0, f64::max);
    // Deterministic stratified barycentric samples per triangle.
    let worst_tri = from
        .triangles
        .par_iter()
        .map(|t| {
            let (a, b, c) = (
                from.vertices[t[0]],
                from.vertices[t[1]],
                from.vertices[t[2]],
            );
            let mut worst = 0.0f64;
            let n = (samples_per_tri as f64).sqrt().ceil() as usize;
            for iu in 0..n {
                for iv in 0..(n - iu) {
                    let u = (iu as f64 + 0.5) / n as f64;
                    let v = (iv as f64 + 0.5) / n as f64;
                    if u + v >= 1.0 {
                        continue;
                    }
                    let p = a + (b - a) * u + (c - a) * v;
                    worst = worst.max((bvh.nearest(&p).0 - p).norm());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    worst_vert.max(worst_tri)
}

/// Surface triangle mesh of a tet mesh's boundary.
pub fn boundary_mesh(mesh: &crate::mesh::TetMesh) -> TriangleMesh {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut out = TriangleMesh::default();
    for st in &mesh.surface_tris {
        let mut tri = [0usize; 3];
        for (k, &v) in st.verts.iter().enumerate() {
            tri[k] = *map.entry(v).or_insert_with(|| {
                out.vertices.push(mesh.vertices[v]);
                out.vertices.len() - 1
            });
        }
        out.triangles.push(tri);
    }
    out
}

/// Offset every vertex of a mesh along +x (test helper for the analytic
/// Hausdorff oracle).
pub fn offset_mesh(mesh: &TriangleMesh, offset: Vec3) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|p| p + offset).collect(),
        triangles: mesh.triangles.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{MedialSphere, SphereKind};

    fn single_sphere_mm(radius: f64) -> (MedialMesh, SphereSet) {
        let mut set = SphereSet::new();
        set.insert(MedialSphere::new(Point::new(1.0, 2.0, 3.0), radius, SphereKind::T2));
        let mm = MedialMesh {
            vertices: vec![0],
            ..Default::default()
        };
        (mm, set)
    }

    #[test]
    fn sphere_reconstruction_is_watertight_and_tight() {
        let (mm, set) = single_sphere_mm(2.0);
        let (mesh, warn) = reconstruct_envelope(&mm, &set, 48);
        assert!(!warn);
        assert!(mesh.is_watertight());
        assert_eq!(mesh.euler(), 2, "sphere topology");
        let cell = 4.0 / 45.0;
        for v in &mesh.vertices {
            let d = ((v - Point::new(1.0, 2.0, 3.0)).norm() - 2.0).abs();
            assert!(d < cell, "vertex within one grid cell of the sphere");
        }
    }

    #[test]
    fn capsule_reconstruction_radius() {
        let mut set = SphereSet::new();
        set.insert(MedialSphere::new(Point::new(0.0, 0.0, 0.0), 1.0, SphereKind::T2));
        set.insert(MedialSphere::new(Point::new(4.0, 0.0, 0.0), 1.0, SphereKind::T2));
        let mm = MedialMesh {
            vertices: vec![0, 1],
            edges: vec![(0, 1)],
            ..Default::default()
        };
        let (mesh, _) = reconstruct_envelope(&mm, &set, 64);
        assert!(mesh.is_watertight());
        assert_eq!(mesh.euler(), 2);
        let cell = 6.0 / 61.0;
        // Cross-section radius near the middle of the capsule.
        for v in mesh.vertices.iter().filter(|v| (v.x - 2.0).abs() < 0.5) {
            let r = (v.y * v.y + v.z * v.z).sqrt();
            assert!((r - 1.0).abs() < cell, "cylinder radius, got {r}");
        }
    }

    #[test]
    fn hausdorff_identity_and_offset() {
        let mesh = boundary_mesh(&crate::synth::voxel_cube(2, 1.0));
        let (e1, e2, emax) = hausdorff(&mesh, &mesh, 16);
        assert_eq!((e1, e2, emax), (0.0, 0.0, 0.0));

        // Cube offset by 1% of its edge along +x: eps1 = offset / diag.
        let offset = 10.0;
        let moved = offset_mesh(&mesh, Vec3::x() * offset);
        let (e1, e2, emax) = hausdorff(&mesh, &moved, 16);
        let expected = offset / mesh.bbox().diagonal() * 100.0;
        assert!((e1 - expected).abs() / expected < 0.1, "eps1 {e1} vs {expected}");
        assert!((e2 - expected).abs() / expected < 0.1);
        assert_eq!(emax, e1.max(e2));
    }
}
