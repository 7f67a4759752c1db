//! Input tetrahedral mesh: loading, validation, normalization, surface
//! features, sampling, and global topology reference values.

mod features;
mod io;
pub(crate) mod sample;

pub use features::detect_features;
pub use io::{load_tet_mesh, read_feature_sidecar, MeshFormat};
pub use sample::{feature_edge_normal, sample_surface, vertex_normal, SampleKind, SurfaceSample};

use std::collections::HashMap;

use crate::bvh::TriBvh;
use crate::math::{tet_volume, tri_area, tri_normal, Aabb, Point, Vec3};

/// Side length of the normalized bounding cube.
pub const NORMALIZED_EXTENT: f64 = 1000.0;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no tetrahedra")]
    Empty,
    #[error("degenerate tetrahedra (zero volume): {0:?}")]
    DegenerateTets(Vec<usize>),
    #[error("inverted tetrahedra (negative volume): {0:?}")]
    InvertedTets(Vec<usize>),
    #[error("non-manifold boundary: {0}")]
    NonManifoldBoundary(String),
    #[error("vertex index {index} out of range (have {count} vertices)")]
    IndexOutOfRange { index: usize, count: usize },
}

/// Boundary triangle of the tet mesh, oriented outward.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceTri {
    pub verts: [usize; 3],
    /// The unique tet owning this face.
    pub tet: usize,
    pub normal: Vec3,
    pub area: f64,
}

/// Sharp surface edge, flagged convex or concave by the dihedral deviation sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureEdge {
    pub verts: [usize; 2],
    pub convex: bool,
}

/// Unique triangular face of the tet complex.
#[derive(Debug, Clone, Copy)]
pub struct Face {
    /// Sorted vertex indices.
    pub verts: [usize; 3],
    pub tets: [usize; 2],
    pub n_tets: u8,
    /// Index into `surface_tris` when this is a boundary face.
    pub surface: Option<usize>,
}

/// Unique edge of the tet complex.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    /// Sorted vertex indices.
    pub verts: [usize; 2],
    /// Number of tets sharing the edge.
    pub valence: u32,
}

/// Mapping from original model coordinates to the normalized frame.
#[derive(Debug, Clone, Copy)]
pub struct Normalization {
    pub scale: f64,
    pub offset: Vec3,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            scale: 1.0,
            offset: Vec3::zeros(),
        }
    }

    pub fn to_normalized(&self, p: &Point) -> Point {
        Point::from((p.coords - self.offset) * self.scale)
    }

    pub fn to_original(&self, p: &Point) -> Point {
        Point::from(p.coords / self.scale + self.offset)
    }
}

/// Validated, normalized tetrahedral mesh with its derived topology tables.
#[derive(Debug, Clone)]
pub struct TetMesh {
    pub vertices: Vec<Point>,
    pub tets: Vec<[usize; 4]>,
    pub surface_tris: Vec<SurfaceTri>,
    pub feature_edges: Vec<FeatureEdge>,
    pub corners: Vec<usize>,
    pub bbox_diag: f64,
    pub transform: Normalization,

    /// Unique faces of the complex.
    pub faces: Vec<Face>,
    /// Per tet, global face ids; entry `i` is the face opposite local vertex `i`.
    pub tet_faces: Vec<[usize; 4]>,
    /// Unique edges of the complex.
    pub edges: Vec<Edge>,
    edge_index: HashMap<[usize; 2], usize>,
    /// Number of tets incident to each vertex.
    pub vert_valence: Vec<u32>,

    surf_bvh: TriBvh,
    locator: TetGrid,
}

impl TetMesh {
    /// Validate and normalize a raw vertex/tet soup.
    ///
    /// Establishes all invariants: positive tet volumes, closed 2-manifold
    /// boundary, coordinates rescaled into the `[0, 1000]^3` cube.
    pub fn build(vertices: Vec<Point>, tets: Vec<[usize; 4]>) -> Result<TetMesh, MeshError> {
        if tets.is_empty() {
            return Err(MeshError::Empty);
        }
        for t in &tets {
            for &v in t {
                if v >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        index: v,
                        count: vertices.len(),
                    });
                }
            }
        }

        // Normalize into [0, 1000]^3 preserving aspect ratio.
        let bbox = Aabb::from_points(vertices.iter());
        let extent = bbox.max - bbox.min;
        let max_extent = extent.x.max(extent.y).max(extent.z);
        if !(max_extent > 0.0) {
            return Err(MeshError::DegenerateTets((0..tets.len()).collect()));
        }
        let transform = Normalization {
            scale: NORMALIZED_EXTENT / max_extent,
            offset: bbox.min.coords,
        };
        let vertices: Vec<Point> = vertices.iter().map(|p| transform.to_normalized(p)).collect();
        let bbox = Aabb::from_points(vertices.iter());
        let bbox_diag = bbox.diagonal();

        // Orientation check.
        let mut degenerate = Vec::new();
        let mut inverted = Vec::new();
        let vol_eps = 1e-14 * bbox_diag.powi(3);
        for (i, t) in tets.iter().enumerate() {
            let v = tet_volume(
                &vertices[t[0]],
                &vertices[t[1]],
                &vertices[t[2]],
                &vertices[t[3]],
            );
            if v.abs() <= vol_eps {
                degenerate.push(i);
            } else if v < 0.0 {
                inverted.push(i);
            }
        }
        if !degenerate.is_empty() {
            return Err(MeshError::DegenerateTets(degenerate));
        }
        if !inverted.is_empty() {
            return Err(MeshError::InvertedTets(inverted));
        }

        // Unique faces; local face i of a tet is opposite local vertex i.
        let mut face_index: HashMap<[usize; 3], usize> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        let mut tet_faces = vec![[usize::MAX; 4]; tets.len()];
        for (ti, t) in tets.iter().enumerate() {
            for li in 0..4 {
                let mut fv = [0usize; 3];
                let mut k = 0;
                for lj in 0..4 {
                    if lj != li {
                        fv[k] = t[lj];
                        k += 1;
                    }
                }
                fv.sort_unstable();
                let fid = *face_index.entry(fv).or_insert_with(|| {
                    faces.push(Face {
                        verts: fv,
                        tets: [usize::MAX; 2],
                        n_tets: 0,
                        surface: None,
                    });
                    faces.len() - 1
                });
                let f = &mut faces[fid];
                if f.n_tets >= 2 {
                    return Err(MeshError::NonManifoldBoundary(format!(
                        "face {:?} shared by more than two tets",
                        fv
                    )));
                }
                f.tets[f.n_tets as usize] = ti;
                f.n_tets += 1;
                tet_faces[ti][li] = fid;
            }
        }

        // Boundary faces, oriented outward (away from the opposite tet vertex).
        let mut surface_tris = Vec::new();
        for (fid, f) in faces.iter_mut().enumerate() {
            if f.n_tets != 1 {
                continue;
            }
            let ti = f.tets[0];
            let t = &tets[ti];
            let li = tet_faces[ti].iter().position(|&g| g == fid).unwrap();
            let opposite = vertices[t[li]];
            let [a, b, c] = f.verts;
            let mut n = tri_normal(&vertices[a], &vertices[b], &vertices[c]);
            if n.dot(&(opposite - vertices[a])) > 0.0 {
                n = -n;
            }
            f.surface = Some(surface_tris.len());
            surface_tris.push(SurfaceTri {
                verts: f.verts,
                tet: ti,
                normal: n,
                area: tri_area(&vertices[a], &vertices[b], &vertices[c]),
            });
        }
        if surface_tris.is_empty() {
            return Err(MeshError::NonManifoldBoundary("no boundary faces".into()));
        }

        // Closed 2-manifold boundary: every surface edge bounds exactly 2 tris.
        let mut surf_edge_count: HashMap<[usize; 2], u32> = HashMap::new();
        for st in &surface_tris {
            for k in 0..3 {
                let mut e = [st.verts[k], st.verts[(k + 1) % 3]];
                e.sort_unstable();
                *surf_edge_count.entry(e).or_insert(0) += 1;
            }
        }
        for (e, c) in &surf_edge_count {
            if *c != 2 {
                return Err(MeshError::NonManifoldBoundary(format!(
                    "surface edge {:?} bounds {} triangles",
                    e, c
                )));
            }
        }

        // Edge table and vertex valences.
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut vert_valence = vec![0u32; vertices.len()];
        for t in &tets {
            for &v in t {
                vert_valence[v] += 1;
            }
            for a in 0..4 {
                for b in (a + 1)..4 {
                    let mut e = [t[a], t[b]];
                    e.sort_unstable();
                    let eid = *edge_index.entry(e).or_insert_with(|| {
                        edges.push(Edge {
                            verts: e,
                            valence: 0,
                        });
                        edges.len() - 1
                    });
                    edges[eid].valence += 1;
                }
            }
        }

        let surf_bvh = TriBvh::build(
            surface_tris
                .iter()
                .map(|st| {
                    [
                        vertices[st.verts[0]],
                        vertices[st.verts[1]],
                        vertices[st.verts[2]],
                    ]
                })
                .collect(),
        );
        let locator = TetGrid::build(&vertices, &tets);

        Ok(TetMesh {
            vertices,
            tets,
            surface_tris,
            feature_edges: Vec::new(),
            corners: Vec::new(),
            bbox_diag,
            transform,
            faces,
            tet_faces,
            edges,
            edge_index,
            vert_valence,
            surf_bvh,
            locator,
        })
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        let e = if a < b { [a, b] } else { [b, a] };
        self.edge_index.get(&e).copied()
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t];
        tet_volume(
            &self.vertices[a],
            &self.vertices[b],
            &self.vertices[c],
            &self.vertices[d],
        )
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn surface_area(&self) -> f64 {
        self.surface_tris.iter().map(|st| st.area).sum()
    }

    pub fn surface_tri_points(&self, st: &SurfaceTri) -> [Point; 3] {
        [
            self.vertices[st.verts[0]],
            self.vertices[st.verts[1]],
            self.vertices[st.verts[2]],
        ]
    }

    /// Euler characteristic V - E + F - C of the full tet complex.
    pub fn mesh_euler(&self) -> i64 {
        let referenced: std::collections::HashSet<usize> =
            self.tets.iter().flat_map(|t| t.iter().copied()).collect();
        referenced.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
            - self.tets.len() as i64
    }

    /// Euler characteristic V - E + F of the boundary surface.
    pub fn surface_euler(&self) -> i64 {
        let mut verts = std::collections::HashSet::new();
        let mut edges = std::collections::HashSet::new();
        for st in &self.surface_tris {
            for k in 0..3 {
                verts.insert(st.verts[k]);
                let mut e = [st.verts[k], st.verts[(k + 1) % 3]];
                e.sort_unstable();
                edges.insert(e);
            }
        }
        verts.len() as i64 - edges.len() as i64 + self.surface_tris.len() as i64
    }

    /// Nearest point on the boundary surface; returns (point, surface tri index).
    pub fn nearest_surface_point(&self, p: &Point) -> (Point, usize) {
        self.surf_bvh.nearest(p)
    }

    /// Nearest surface point among triangles accepted by `filter`.
    pub fn nearest_surface_point_filtered(
        &self,
        p: &Point,
        filter: &dyn Fn(usize) -> bool,
    ) -> Option<(Point, usize)> {
        self.surf_bvh.nearest_filtered(p, filter)
    }

    /// Index of a tet containing `p`, if any (tolerance `eps` on face planes).
    pub fn locate(&self, p: &Point, eps: f64) -> Option<usize> {
        self.locator.locate(self, p, eps)
    }

    pub fn tet_contains(&self, t: usize, p: &Point, eps: f64) -> bool {
        let [a, b, c, d] = self.tets[t];
        let v = [
            &self.vertices[a],
            &self.vertices[b],
            &self.vertices[c],
            &self.vertices[d],
        ];
        // Positive orientation: p is inside when every face sub-volume is >= -eps.
        let vol = tet_volume(v[0], v[1], v[2], v[3]);
        let tol = eps * vol.abs().max(1e-30);
        tet_volume(&p.clone(), v[1], v[2], v[3]) >= -tol
            && tet_volume(v[0], &p.clone(), v[2], v[3]) >= -tol
            && tet_volume(v[0], v[1], &p.clone(), v[3]) >= -tol
            && tet_volume(v[0], v[1], v[2], &p.clone()) >= -tol
    }

    /// True when `p` lies on the boundary surface within `tol`.
    pub fn on_surface(&self, p: &Point, tol: f64) -> bool {
        let (q, _) = self.nearest_surface_point(p);
        (q - p).norm() <= tol
    }
}

/// Uniform-grid point locator over tets.
#[derive(Debug, Clone)]
struct TetGrid {
    origin: Point,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl TetGrid {
    fn build(vertices: &[Point], tets: &[[usize; 4]]) -> TetGrid {
        let bbox = Aabb::from_points(vertices.iter());
        let n = ((tets.len() as f64).cbrt().ceil() as usize).clamp(1, 64);
        let extent = bbox.max - bbox.min;
        let cell = (extent.x.max(extent.y).max(extent.z) / n as f64).max(1e-9);
        let dims = [
            ((extent.x / cell).ceil() as usize).max(1),
            ((extent.y / cell).ceil() as usize).max(1),
            ((extent.z / cell).ceil() as usize).max(1),
        ];
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let clamp_idx = |v: f64, d: usize| -> usize { (v.floor() as i64).clamp(0, d as i64 - 1) as usize };
        for (ti, t) in tets.iter().enumerate() {
            let tb = Aabb::from_points(t.iter().map(|&v| &vertices[v]));
            let lo = [
                clamp_idx((tb.min.x - bbox.min.x) / cell, dims[0]),
                clamp_idx((tb.min.y - bbox.min.y) / cell, dims[1]),
                clamp_idx((tb.min.z - bbox.min.z) / cell, dims[2]),
            ];
            let hi = [
                clamp_idx((tb.max.x - bbox.min.x) / cell, dims[0]),
                clamp_idx((tb.max.y - bbox.min.y) / cell, dims[1]),
                clamp_idx((tb.max.z - bbox.min.z) / cell, dims[2]),
            ];
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        cells[(i * dims[1] + j) * dims[2] + k].push(ti as u32);
                    }
                }
            }
        }
        TetGrid {
            origin: bbox.min,
            cell,
            dims,
            cells,
        }
    }

    fn locate(&self, mesh: &TetMesh, p: &Point, eps: f64) -> Option<usize> {
        let idx = |v: f64, d: usize| -> Option<usize> {
            let i = (v / self.cell).floor() as i64;
            if i < 0 || i >= d as i64 {
                None
            } else {
                Some(i as usize)
            }
        };
        let i = idx(p.x - self.origin.x, self.dims[0])?;
        let j = idx(p.y - self.origin.y, self.dims[1])?;
        let k = idx(p.z - self.origin.z, self.dims[2])?;
        self.cells[(i * self.dims[1] + j) * self.dims[2] + k]
            .iter()
            .map(|&t| t as usize)
            .find(|&t| mesh.tet_contains(t, p, eps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn single_tet_counts() {
        let mesh = synth::single_tet();
        assert_eq!(mesh.tets.len(), 1);
        assert_eq!(mesh.surface_tris.len(), 4);
        assert_eq!(mesh.mesh_euler(), 1);
    }

    #[test]
    fn cube5_counts() {
        let mesh = synth::cube_five_tets();
        assert_eq!(mesh.tets.len(), 5);
        assert_eq!(mesh.surface_tris.len(), 12);
        assert_eq!(mesh.mesh_euler(), 1);
        // Closed boundary established by construction (build() would reject otherwise).
        assert_eq!(mesh.surface_euler(), 2);
    }

    #[test]
    fn duplicated_tet_is_nonmanifold() {
        let mesh = synth::single_tet();
        let mut tets = mesh.tets.clone();
        tets.push(tets[0]);
        let verts: Vec<Point> = mesh.vertices.clone();
        let err = TetMesh::build(verts, tets).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldBoundary(_)));
    }

    #[test]
    fn inverted_tet_reported() {
        let verts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        let err = TetMesh::build(verts, vec![[0, 2, 1, 3]]).unwrap_err();
        match err {
            MeshError::InvertedTets(ix) => assert_eq!(ix, vec![0]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn normalization_bounds() {
        let mesh = synth::cube_five_tets();
        for v in &mesh.vertices {
            for k in 0..3 {
                assert!(v[k] >= -1e-9 && v[k] <= NORMALIZED_EXTENT + 1e-9);
            }
        }
        let orig = mesh.transform.to_original(&mesh.vertices[0]);
        let back = mesh.transform.to_normalized(&orig);
        assert!((back - mesh.vertices[0]).norm() < 1e-9);
    }

    #[test]
    fn euler_torus_and_disjoint() {
        let torus = synth::torus_grid(8, 2, 2, 1.0);
        assert_eq!(torus.mesh_euler(), 0);
        assert_eq!(torus.surface_euler(), 0);

        // Two disjoint tets: additivity.
        let mut verts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        let shift = Vec3::new(10.0, 0.0, 0.0);
        for i in 0..4 {
            verts.push(verts[i] + shift);
        }
        let mesh = TetMesh::build(verts, vec![[0, 1, 2, 3], [4, 5, 6, 7]]).unwrap();
        assert_eq!(mesh.mesh_euler(), 2);
    }

    #[test]
    fn solid_euler_is_half_surface_euler() {
        for mesh in [
            synth::single_tet(),
            synth::cube_five_tets(),
            synth::torus_grid(8, 2, 2, 1.0),
            synth::ball(1.0, 2),
        ] {
            assert_eq!(mesh.mesh_euler() * 2, mesh.surface_euler());
        }
    }

    #[test]
    fn locate_finds_containing_tet() {
        let mesh = synth::cube_five_tets();
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = Point::new(
                rng.gen::<f64>() * 900.0 + 50.0,
                rng.gen::<f64>() * 900.0 + 50.0,
                rng.gen::<f64>() * 900.0 + 50.0,
            );
            let t = mesh.locate(&p, 1e-12).expect("interior point must be located");
            assert!(mesh.tet_contains(t, &p, 1e-9));
        }
    }
}
