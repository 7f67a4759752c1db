//! Programmatically generated tet meshes used by tests, benchmarks, and the
//! examples in the docs. All constructors return validated, normalized
//! meshes.

use std::collections::HashMap;

use crate::math::{tet_volume, Point, Vec3};
use crate::mesh::TetMesh;

/// One regular-ish tetrahedron.
pub fn single_tet() -> TetMesh {
    let verts = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(1.0, 0.0, 0.0),
        Point::new(0.0, 1.0, 0.0),
        Point::new(0.0, 0.0, 1.0),
    ];
    TetMesh::build(verts, vec![[0, 1, 2, 3]]).unwrap()
}

/// Unit cube split into 5 tets (4 corner tets + 1 central).
pub fn cube_five_tets() -> TetMesh {
    let v = |x: f64, y: f64, z: f64| Point::new(x, y, z);
    let verts = vec![
        v(0.0, 0.0, 0.0), // 0
        v(1.0, 0.0, 0.0), // 1
        v(1.0, 1.0, 0.0), // 2
        v(0.0, 1.0, 0.0), // 3
        v(0.0, 0.0, 1.0), // 4
        v(1.0, 0.0, 1.0), // 5
        v(1.0, 1.0, 1.0), // 6
        v(0.0, 1.0, 1.0), // 7
    ];
    let tets = orient(vec![
        [0, 1, 2, 5],
        [0, 2, 3, 7],
        [0, 5, 7, 4],
        [2, 7, 5, 6],
        [0, 2, 7, 5],
    ]);
    let tets = tets
        .into_iter()
        .map(|t| reorder_positive(&verts, t))
        .collect();
    TetMesh::build(verts, tets).unwrap()
}

fn orient(tets: Vec<[usize; 4]>) -> Vec<[usize; 4]> {
    tets
}

fn reorder_positive(verts: &[Point], mut t: [usize; 4]) -> [usize; 4] {
    if tet_volume(&verts[t[0]], &verts[t[1]], &verts[t[2]], &verts[t[3]]) < 0.0 {
        t.swap(2, 3);
    }
    t
}

/// Voxel solid: keep every grid cell `(i, j, k)` in `dims` accepted by `keep`,
/// split each cell into 6 tets (Kuhn subdivision, conforming across cells).
pub fn voxel_solid(
    dims: [usize; 3],
    cell: f64,
    keep: impl Fn(usize, usize, usize) -> bool,
) -> TetMesh {
    // Kuhn: six tets around the main diagonal (0,0,0) -> (1,1,1), one per
    // axis permutation.
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut vert_ids: HashMap<[usize; 3], usize> = HashMap::new();
    let mut verts: Vec<Point> = Vec::new();
    let mut tets: Vec<[usize; 4]> = Vec::new();
    let mut vid = |verts: &mut Vec<Point>, gx: usize, gy: usize, gz: usize| -> usize {
        *vert_ids.entry([gx, gy, gz]).or_insert_with(|| {
            verts.push(Point::new(
                gx as f64 * cell,
                gy as f64 * cell,
                gz as f64 * cell,
            ));
            verts.len() - 1
        })
    };
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                if !keep(i, j, k) {
                    continue;
                }
                for perm in PERMS {
                    let mut corner = [i, j, k];
                    let v0 = vid(&mut verts, corner[0], corner[1], corner[2]);
                    corner[perm[0]] += 1;
                    let v1 = vid(&mut verts, corner[0], corner[1], corner[2]);
                    corner[perm[1]] += 1;
                    let v2 = vid(&mut verts, corner[0], corner[1], corner[2]);
                    corner[perm[2]] += 1;
                    let v3 = vid(&mut verts, corner[0], corner[1], corner[2]);
                    tets.push(reorder_positive(&verts, [v0, v1, v2, v3]));
                }
            }
        }
    }
    TetMesh::build(verts, tets).unwrap()
}

/// Cube of `n`^3 cells.
pub fn voxel_cube(n: usize, cell: f64) -> TetMesh {
    voxel_solid([n, n, n], cell, |_, _, _| true)
}

/// Rectangular box of cells.
pub fn voxel_box(dims: [usize; 3], cell: f64) -> TetMesh {
    voxel_solid(dims, cell, |_, _, _| true)
}

/// Square donut: `n` x `n` x `height` cells with a centered `hole` x `hole`
/// column removed. Topologically a solid torus (Euler 0). Requires
/// `n > hole` and `(n - hole)` even.
pub fn torus_grid(n: usize, hole: usize, height: usize, cell: f64) -> TetMesh {
    assert!(hole < n && (n - hole) % 2 == 0);
    let pad = (n - hole) / 2;
    voxel_solid([n, n, height], cell, |i, j, _| {
        !(i >= pad && i < pad + hole && j >= pad && j < pad + hole)
    })
}

/// L-shaped block: a `2n` x `2n` x `n` box with one quadrant column removed.
pub fn l_block(n: usize, cell: f64) -> TetMesh {
    voxel_solid([2 * n, 2 * n, n], cell, |i, j, _| !(i >= n && j >= n))
}

/// U-shaped block: a `3n` x `n` x `2n` box with the middle-top notch removed
/// (two upright arms joined at the bottom).
pub fn u_block(n: usize, cell: f64) -> TetMesh {
    voxel_solid([3 * n, n, 2 * n], cell, |i, _, k| {
        !(i >= n && i < 2 * n && k >= n)
    })
}

/// Plate with two square holes; a genus-2 solid (Euler -1).
pub fn genus2_plate(cell: f64) -> TetMesh {
    voxel_solid([7, 3, 1], cell, |i, j, _| {
        !((i == 1 || i == 2) && j == 1) && !((i == 4 || i == 5) && j == 1)
    })
}

/// Ball of radius `r`: an icosphere surface (subdivided `subdiv` times) coned
/// from the center.
pub fn ball(r: f64, subdiv: usize) -> TetMesh {
    let tris = icosphere(subdiv);
    star_solid(
        &tris
            .iter()
            .map(|t| t.map(|p| Point::from(p.coords * r)))
            .collect::<Vec<_>>(),
        Point::origin(),
    )
}

/// Upright cylinder of radius `r`, height `h`, with `segments` sides, coned
/// from its centroid. The top and bottom rims are sharp feature circles.
pub fn cylinder(r: f64, h: f64, segments: usize) -> TetMesh {
    assert!(segments >= 3);
    let mut tris: Vec<[Point; 3]> = Vec::new();
    let ring = |z: f64| -> Vec<Point> {
        (0..segments)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / segments as f64;
                Point::new(r * a.cos(), r * a.sin(), z)
            })
            .collect()
    };
    let bottom = ring(0.0);
    let top = ring(h);
    let cb = Point::new(0.0, 0.0, 0.0);
    let ct = Point::new(0.0, 0.0, h);
    for i in 0..segments {
        let j = (i + 1) % segments;
        // Bottom fan, outward is -z.
        tris.push([cb, bottom[j], bottom[i]]);
        // Top fan, outward is +z.
        tris.push([ct, top[i], top[j]]);
        // Side quad.
        tris.push([bottom[i], bottom[j], top[j]]);
        tris.push([bottom[i], top[j], top[i]]);
    }
    star_solid(&tris, Point::new(0.0, 0.0, h / 2.0))
}

/// Tetrahedralize a star-shaped solid by coning every surface triangle to a
/// kernel point. Surface triangles must be wound outward.
pub fn star_solid(tris: &[[Point; 3]], kernel: Point) -> TetMesh {
    let mut vert_ids: HashMap<[i64; 3], usize> = HashMap::new();
    let mut verts: Vec<Point> = Vec::new();
    let quant = 1e9;
    let mut vid = |verts: &mut Vec<Point>, p: Point| -> usize {
        let key = [
            (p.x * quant).round() as i64,
            (p.y * quant).round() as i64,
            (p.z * quant).round() as i64,
        ];
        *vert_ids.entry(key).or_insert_with(|| {
            verts.push(p);
            verts.len() - 1
        })
    };
    let k = vid(&mut verts, kernel);
    let mut tets = Vec::new();
    for t in tris {
        let a = vid(&mut verts, t[0]);
        let b = vid(&mut verts, t[1]);
        let c = vid(&mut verts, t[2]);
        tets.push(reorder_positive(&verts, [k, a, b, c]));
    }
    TetMesh::build(verts, tets).unwrap()
}

/// Icosphere triangles on the unit sphere.
fn icosphere(subdiv: usize) -> Vec<[Point; 3]> {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut verts = vec![
        Vec3::new(-1.0, phi, 0.0),
        Vec3::new(1.0, phi, 0.0),
        Vec3::new(-1.0, -phi, 0.0),
        Vec3::new(1.0, -phi, 0.0),
        Vec3::new(0.0, -1.0, phi),
        Vec3::new(0.0, 1.0, phi),
        Vec3::new(0.0, -1.0, -phi),
        Vec3::new(0.0, 1.0, -phi),
        Vec3::new(phi, 0.0, -1.0),
        Vec3::new(phi, 0.0, 1.0),
        Vec3::new(-phi, 0.0, -1.0),
        Vec3::new(-phi, 0.0, 1.0),
    ];
    for v in &mut verts {
        *v = v.normalize();
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    verts.push((verts[a] + verts[b]).normalize());
                    verts.len() - 1
                });
            }
            new_faces.push([f[0], mid[0], mid[2]]);
            new_faces.push([f[1], mid[1], mid[0]]);
            new_faces.push([f[2], mid[2], mid[1]]);
            new_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = new_faces;
    }
    faces
        .iter()
        .map(|f| {
            [
                Point::from(verts[f[0]]),
                Point::from(verts[f[1]]),
                Point::from(verts[f[2]]),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid_and_have_expected_euler() {
        assert_eq!(single_tet().mesh_euler(), 1);
        assert_eq!(cube_five_tets().mesh_euler(), 1);
        assert_eq!(voxel_cube(3, 1.0).mesh_euler(), 1);
        assert_eq!(torus_grid(6, 2, 2, 1.0).mesh_euler(), 0);
        assert_eq!(l_block(2, 1.0).mesh_euler(), 1);
        assert_eq!(u_block(2, 1.0).mesh_euler(), 1);
        assert_eq!(genus2_plate(1.0).mesh_euler(), -1);
        assert_eq!(ball(2.0, 2).mesh_euler(), 1);
        assert_eq!(cylinder(1.0, 2.0, 24).mesh_euler(), 1);
    }

    #[test]
    fn voxel_volumes_are_exact() {
        let mesh = voxel_cube(2, 1.0);
        // 8 cells, normalized scale 1000/2 per unit -> volume (1000)^3.
        let expected = 1000.0_f64.powi(3);
        assert!((mesh.total_volume() - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn torus_tet_count_scales() {
        let mesh = torus_grid(12, 4, 3, 1.0);
        assert_eq!(mesh.tets.len(), (12 * 12 - 4 * 4) * 3 * 6);
    }
}
