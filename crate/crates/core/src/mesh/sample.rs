//! Random surface sampling: area-weighted interior samples, arc-length
//! feature-edge samples, and one sample per corner.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::TetMesh;
use crate::math::{Point, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Interior,
    FeatureEdge,
    Corner,
}

#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub position: Point,
    pub normal: Vec3,
    pub kind: SampleKind,
    /// Originating surface triangle (Interior), feature edge (FeatureEdge),
    /// or corner list index (Corner).
    pub source: usize,
}

/// Sample the boundary surface with expected `density` samples per unit area.
///
/// Interior counts follow a Poisson law per triangle; feature edges are
/// sampled uniformly by arc length at spacing `1/sqrt(density)`; each corner
/// yields one sample. Deterministic for a fixed seed.
pub fn sample_surface(mesh: &TetMesh, density: f64, seed: u64) -> Vec<SurfaceSample> {
    assert!(density > 0.0, "density must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();

    for (si, st) in mesh.surface_tris.iter().enumerate() {
        let lambda = density * st.area;
        let count = if lambda > 0.0 {
            Poisson::new(lambda).map(|p| p.sample(&mut rng) as usize).unwrap_or(0)
        } else {
            0
        };
        let [a, b, c] = mesh.surface_tri_points(st);
        for _ in 0..count {
            let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let p = a + (b - a) * u + (c - a) * v;
            samples.push(SurfaceSample {
                position: p,
                normal: st.normal,
                kind: SampleKind::Interior,
                source: si,
            });
        }
    }

    let spacing = 1.0 / density.sqrt();
    for (fi, fe) in mesh.feature_edges.iter().enumerate() {
        let a = mesh.vertices[fe.verts[0]];
        let b = mesh.vertices[fe.verts[1]];
        let len = (b - a).norm();
        let n = (len / spacing).floor() as usize;
        let normal = feature_edge_normal(mesh, fe.verts);
        for k in 1..=n {
            let t = k as f64 / (n + 1) as f64;
            samples.push(SurfaceSample {
                position: a + (b - a) * t,
                normal,
                kind: SampleKind::FeatureEdge,
                source: fi,
            });
        }
    }

    for (ci, &v) in mesh.corners.iter().enumerate() {
        samples.push(SurfaceSample {
            position: mesh.vertices[v],
            normal: vertex_normal(mesh, v),
            kind: SampleKind::Corner,
            source: ci,
        });
    }

    samples
}

/// Average outward normal of the two faces bounding a surface edge.
pub fn feature_edge_normal(mesh: &TetMesh, edge: [usize; 2]) -> Vec3 {
    let mut n = Vec3::zeros();
    for st in &mesh.surface_tris {
        let hits = st.verts.iter().filter(|v| edge.contains(v)).count();
        if hits == 2 {
            n += st.normal;
        }
    }
    let len = n.norm();
    if len > 1e-12 {
        n / len
    } else {
        // Opposed normals (knife edge): fall back to one face's normal.
        mesh.surface_tris
            .iter()
            .find(|st| st.verts.iter().filter(|v| edge.contains(v)).count() == 2)
            .map(|st| st.normal)
            .unwrap_or_else(Vec3::zeros)
    }
}

/// Area-weighted average outward normal of the faces around a surface vertex.
pub fn vertex_normal(mesh: &TetMesh, v: usize) -> Vec3 {
    let mut n = Vec3::zeros();
    for st in &mesh.surface_tris {
        if st.verts.contains(&v) {
            n += st.normal * st.area;
        }
    }
    let len = n.norm();
    if len > 1e-12 {
        n / len
    } else {
        Vec3::z()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::detect_features;
    use crate::synth;

    #[test]
    fn deterministic_for_fixed_seed() {
        let mesh = synth::cube_five_tets();
        let a = sample_surface(&mesh, 1e-4, 42);
        let b = sample_surface(&mesh, 1e-4, 42);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.kind, y.kind);
        }
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        let mesh = synth::cube_five_tets();
        let density = 2e-4; // ~1200 expected over 6 * 1e6 area
        let samples = sample_surface(&mesh, density, 7);
        let n_interior = samples
            .iter()
            .filter(|s| s.kind == SampleKind::Interior)
            .count() as f64;
        let expected = density * mesh.surface_area();
        let sigma = expected.sqrt();
        assert!(
            (n_interior - expected).abs() < 3.0 * sigma,
            "count {n_interior} vs expected {expected}"
        );
    }

    #[test]
    fn tiny_density_keeps_feature_samples() {
        let mut mesh = synth::cube_five_tets();
        detect_features(&mut mesh, 30.0);
        // Density so small that interior counts are ~0 but corners remain.
        let samples = sample_surface(&mesh, 1e-12, 3);
        assert!(samples.iter().any(|s| s.kind == SampleKind::Corner));
        assert_eq!(
            samples.iter().filter(|s| s.kind == SampleKind::Corner).count(),
            8
        );
    }

    #[test]
    fn samples_lie_on_surface() {
        let mut mesh = synth::voxel_cube(2, 1.0);
        detect_features(&mut mesh, 30.0);
        let samples = sample_surface(&mesh, 1e-4, 9);
        let tol = 1e-9 * mesh.bbox_diag;
        for s in &samples {
            assert!(mesh.on_surface(&s.position, tol));
        }
    }
}
