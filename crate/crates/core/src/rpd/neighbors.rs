//! Sphere neighbor computation.
//!
//! A sphere's neighbors are the spheres whose unrestricted power cells share
//! a facet (regular-triangulation adjacency). Each cell is obtained by
//! peeling an inflated bounding box with radical planes against candidate
//! spheres in order of increasing center distance, with a conservative
//! early-out once no remaining candidate can cut the current cell. The
//! Euclidean security-radius shortcut of Voronoi clipping is not valid for
//! power diagrams, so the bound accounts for the globally largest radius.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::math::{Aabb, Point};
use crate::sphere::{SphereId, SphereSet};

use super::cell::{ClipStats, ConvexCell, PlaneTag};
use super::radical_plane_canonical;

/// Power-diagram adjacency plus the set of hidden spheres (whose power cell
/// is empty everywhere inside the domain).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborMap {
    pub map: BTreeMap<SphereId, BTreeSet<SphereId>>,
    pub hidden: BTreeSet<SphereId>,
}

impl NeighborMap {
    pub fn of(&self, i: SphereId) -> Option<&BTreeSet<SphereId>> {
        self.map.get(&i)
    }
}

/// Facet adjacency of the unrestricted power diagram, clipped to an inflated
/// domain box. Symmetric by construction.
pub fn compute_sphere_neighbors(spheres: &SphereSet, domain: &Aabb, eps: f64) -> NeighborMap {
    let active: Vec<&crate::sphere::MedialSphere> = spheres.active().collect();
    let mut out = NeighborMap::default();
    for s in &active {
        out.map.insert(s.id, BTreeSet::new());
    }
    if active.len() < 2 {
        return out;
    }

    // Inflate the box so facets relevant anywhere inside the domain survive.
    let mut bbox = *domain;
    let pad = 0.5 * domain.diagonal().max(1.0);
    for k in 0..3 {
        bbox.min[k] -= pad;
        bbox.max[k] += pad;
    }
    let w_max = active
        .iter()
        .map(|s| super::site_weight(s))
        .fold(0.0, f64::max);

    let per_sphere: Vec<(SphereId, BTreeSet<SphereId>, bool)> = active
        .par_iter()
        .map(|si| {
            let mut stats = ClipStats::default();
            let mut cell = ConvexCell::from_aabb(si.id, &bbox, eps);
            // Candidates sorted by center distance, ids break ties.
            let mut order: Vec<(f64, SphereId)> = active
                .iter()
                .filter(|sj| sj.id != si.id)
                .map(|sj| ((sj.center - si.center).norm(), sj.id))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let weight = super::site_weight(si);
            let (mut r_cell, mut p_max) = cell.radius_and_power_bound(&si.center, weight);
            for (dist, j) in order {
                // No remaining candidate can cut once its closest possible
                // power value over the cell exceeds the cell's worst own
                // power value.
                if dist > r_cell {
                    let gap = dist - r_cell;
                    if gap * gap - w_max > p_max {
                        break;
                    }
                }
                let hs = radical_plane_canonical(si, spheres.get(j));
                let outcome = cell.clip(&hs, &mut stats);
                if cell.is_empty() {
                    break;
                }
                if outcome == super::cell::ClipOutcome::Clipped {
                    let b = cell.radius_and_power_bound(&si.center, weight);
                    r_cell = b.0;
                    p_max = b.1;
                }
            }
            let mut nb = BTreeSet::new();
            if !cell.is_empty() {
                for p in cell.active_planes() {
                    if let PlaneTag::Radical(j) = cell.plane(p as usize).tag {
                        nb.insert(j);
                    }
                }
            }
            (si.id, nb, cell.is_empty())
        })
        .collect();

    for (id, nb, hidden) in per_sphere {
        out.map.insert(id, nb);
        if hidden {
            out.hidden.insert(id);
        }
    }
    // Symmetrize: a sliver facet may be detected from one side only.
    let pairs: Vec<(SphereId, SphereId)> = out
        .map
        .iter()
        .flat_map(|(&i, nb)| nb.iter().map(move |&j| (i, j)))
        .collect();
    for (i, j) in pairs {
        out.map.get_mut(&j).unwrap().insert(i);
    }
    out
}

/// Brute-force validation: a pair is adjacent when some sampled point of
/// their radical plane is power-nearest to the pair. Subset of the true
/// adjacency (it can miss slivers below the sampling resolution), so it is
/// used as a soundness oracle: everything it finds must also be found by
/// `compute_sphere_neighbors`.
pub fn neighbors_bruteforce(
    spheres: &SphereSet,
    domain: &Aabb,
    grid: usize,
) -> BTreeMap<SphereId, BTreeSet<SphereId>> {
    let active: Vec<&crate::sphere::MedialSphere> = spheres.active().collect();
    let mut map: BTreeMap<SphereId, BTreeSet<SphereId>> = BTreeMap::new();
    for s in &active {
        map.insert(s.id, BTreeSet::new());
    }
    let mut bbox = *domain;
    let pad = 0.5 * domain.diagonal().max(1.0);
    for k in 0..3 {
        bbox.min[k] -= pad;
        bbox.max[k] += pad;
    }
    let half_span = 0.5 * bbox.diagonal();

    for a in 0..active.len() {
        for b in (a + 1)..active.len() {
            let (si, sj) = (active[a], active[b]);
            let hs = radical_plane_canonical(si, sj);
            // Chart the plane around the projection of the midpoint.
            let mid = nalgebra::center(&si.center, &sj.center);
            let origin = Point::from(mid.coords - hs.normal * hs.eval(&mid));
            let u = crate::math::pick_tangent(&hs.normal);
            let v = hs.normal.cross(&u);
            let mut adjacent = false;
            'scan: for iu in 0..grid {
                for iv in 0..grid {
                    let su = (iu as f64 / (grid - 1) as f64 - 0.5) * 2.0 * half_span;
                    let sv = (iv as f64 / (grid - 1) as f64 - 0.5) * 2.0 * half_span;
                    let x = origin + u * su + v * sv;
                    if bbox.dist2(&x) > 0.0 {
                        continue;
                    }
                    let p_own = super::site_power(si, &x);
                    let eps = 1e-9 * (1.0 + p_own.abs());
                    if active.iter().all(|sk| {
                        sk.id == si.id || sk.id == sj.id || super::site_power(sk, &x) >= p_own - eps
                    }) {
                        adjacent = true;
                        break 'scan;
                    }
                }
            }
            if adjacent {
                map.get_mut(&si.id).unwrap().insert(sj.id);
                map.get_mut(&sj.id).unwrap().insert(si.id);
            }
        }
    }
    map
}
