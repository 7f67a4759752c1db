//! Independent Euler oracle: extract the explicit boundary complex of each
//! restricted element (vertices, edges, faces, cells deduplicated by
//! position) and count V - E + F - C combinatorially. The fractional payload
//! accumulation must agree exactly.

use std::collections::BTreeSet;

use crate::math::Point;
use crate::rpd::{PlaneTag, Rpd};
use crate::sphere::SphereId;

type Key = [i64; 3];

fn quantize(p: &Point, quantum: f64) -> Key {
    [
        (p.x / quantum).round() as i64,
        (p.y / quantum).round() as i64,
        (p.z / quantum).round() as i64,
    ]
}

/// Combinatorial Euler characteristic (V - E + F - C) of the restricted
/// power cell of `sphere`, from explicit geometry.
pub fn rpc_euler_combinatorial(rpd: &Rpd, sphere: SphereId, quantum: f64) -> i64 {
    let mut verts: BTreeSet<Key> = BTreeSet::new();
    let mut edges: BTreeSet<(Key, Key)> = BTreeSet::new();
    let mut faces: BTreeSet<Vec<Key>> = BTreeSet::new();
    let mut n_cells = 0i64;

    for (_t, cell) in rpd.cells_of_sphere(sphere) {
        n_cells += 1;
        for (_planes, pos, _payload) in cell.vert_payloads() {
            verts.insert(quantize(pos, quantum));
        }
        for ((a, b), _) in cell.active_edges() {
            let pts = cell.edge_points(a, b);
            if pts.len() == 2 {
                let (ka, kb) = (quantize(&pts[0], quantum), quantize(&pts[1], quantum));
                edges.insert((ka.min(kb), ka.max(kb)));
            }
        }
        for p in cell.active_planes() {
            let mut keys: Vec<Key> = cell
                .facet_points(p)
                .iter()
                .map(|q| quantize(q, quantum))
                .collect();
            keys.sort_unstable();
            keys.dedup();
            faces.insert(keys);
        }
    }
    verts.len() as i64 - edges.len() as i64 + faces.len() as i64 - n_cells
}

/// Combinatorial Euler characteristic (V - E + F) of the restricted power
/// face between `sphere` and `neighbor`, accumulated from `sphere`'s side.
pub fn rpf_euler_combinatorial(
    rpd: &Rpd,
    sphere: SphereId,
    neighbor: SphereId,
    quantum: f64,
) -> i64 {
    let tag = PlaneTag::Radical(neighbor);
    let mut verts: BTreeSet<Key> = BTreeSet::new();
    let mut edges: BTreeSet<(Key, Key)> = BTreeSet::new();
    let mut n_faces = 0i64;

    for (_t, cell) in rpd.cells_of_sphere(sphere) {
        let Some(p) = cell.plane_by_tag(tag) else {
            continue;
        };
        let facet = cell.facet_points(p);
        if facet.len() >= 3 {
            n_faces += 1;
        }
        for (planes, pos, _payload) in cell.vert_payloads() {
            if planes.contains(&p) {
                verts.insert(quantize(pos, quantum));
            }
        }
        for ((a, b), _) in cell.active_edges() {
            if a != p && b != p {
                continue;
            }
            let pts = cell.edge_points(a, b);
            if pts.len() == 2 {
                let (ka, kb) = (quantize(&pts[0], quantum), quantize(&pts[1], quantum));
                edges.insert((ka.min(kb), ka.max(kb)));
            }
        }
    }
    verts.len() as i64 - edges.len() as i64 + n_faces
}

/// Combinatorial Euler characteristic (V - E) of the restricted power edge
/// shared by `sphere` and neighbors `j`, `k`, from `sphere`'s side.
pub fn rpe_euler_combinatorial(
    rpd: &Rpd,
    sphere: SphereId,
    j: SphereId,
    k: SphereId,
    quantum: f64,
) -> i64 {
    let (tj, tk) = (PlaneTag::Radical(j), PlaneTag::Radical(k));
    let mut verts: BTreeSet<Key> = BTreeSet::new();
    let mut n_edges = 0i64;
    for (_t, cell) in rpd.cells_of_sphere(sphere) {
        let (Some(pj), Some(pk)) = (cell.plane_by_tag(tj), cell.plane_by_tag(tk)) else {
            continue;
        };
        let pts = cell.edge_points(pj.min(pk), pj.max(pk));
        if pts.len() == 2 {
            n_edges += 1;
            for q in &pts {
                verts.insert(quantize(q, quantum));
            }
        }
    }
    verts.len() as i64 - n_edges
}
