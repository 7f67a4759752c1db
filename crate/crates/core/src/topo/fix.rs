//! Topology check-and-fix: detect restricted elements that are not disks and
//! insert new spheres to repair them.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::math::Point;
use crate::mesh::TetMesh;
use crate::rpd::{frac, Rpd};
use crate::sphere::{sphere_shrink, MedialSphere, ShrinkParams, SphereId, SphereSet};

use super::cc::{restricted_cc, surface_fragments, Component};
use super::{accumulate_euler, ordered, TopoReport, TopoViolation, ViolationKind};

#[derive(Debug, Clone)]
pub struct TopoParams {
    /// Candidate spheres closer than this to an existing center are dropped.
    pub eps_dup: f64,
    pub shrink: ShrinkParams,
    /// Pick pin points randomly (paper behavior) instead of
    /// farthest-from-centers when set.
    pub random_seed: Option<u64>,
}

impl TopoParams {
    pub fn for_mesh(mesh: &TetMesh) -> Self {
        TopoParams {
            eps_dup: 1e-3 * mesh.bbox_diag,
            shrink: ShrinkParams::default(),
            random_seed: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TopoError {
    #[error("sphere {sphere}: violating component exposes no surface triangle (internal void?)")]
    InternalVoid { sphere: SphereId },
}

/// Why a sphere was inserted; kept for reporting and tests.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum InsertionCause {
    RpcEuler { sphere: SphereId },
    RpcCc { sphere: SphereId },
    RpfCc { pair: (SphereId, SphereId) },
    RpfEuler { pair: (SphereId, SphereId) },
    RpeCc { triple: (SphereId, SphereId, SphereId) },
    RpeEuler { triple: (SphereId, SphereId, SphereId) },
}

#[derive(Debug, Default)]
pub struct FixOutcome {
    pub report: TopoReport,
    pub new_spheres: Vec<MedialSphere>,
    pub causes: Vec<InsertionCause>,
}

/// One pass over all active spheres: report every CC/Euler violation and
/// propose one repair sphere per violating element (deduplicated).
pub fn check_and_fix_topology(
    rpd: &Rpd,
    mesh: &TetMesh,
    spheres: &SphereSet,
    params: &TopoParams,
) -> Result<FixOutcome, TopoError> {
    let elems = accumulate_euler(rpd);
    let mut outcome = FixOutcome::default();
    let mut rng = params.random_seed.map(ChaCha8Rng::seed_from_u64);
    let one = frac(1, 1);

    let mut accepted_centers: Vec<Point> = Vec::new();
    let push_candidate =
        |pin: Point,
         normal: crate::math::Vec3,
         cause: InsertionCause,
         outcome: &mut FixOutcome,
         accepted: &mut Vec<Point>| {
            let Ok(res) = sphere_shrink(mesh, pin, normal, &params.shrink) else {
                return;
            };
            let c = res.sphere.center;
            if spheres.min_center_distance(&c) < params.eps_dup
                || accepted.iter().any(|p| (p - c).norm() < params.eps_dup)
            {
                return;
            }
            accepted.push(c);
            outcome.new_spheres.push(res.sphere);
            outcome.causes.push(cause);
        };

    // Components below this volume are clipping slivers, not real topology.
    let ghost_volume = 1e-9 * mesh.total_volume();
    let sphere_ids: Vec<SphereId> = rpd.nonempty_spheres().into_iter().collect();
    for &i in &sphere_ids {
        let si = spheres.get(i);
        let cc = restricted_cc(rpd, mesh, i);
        let el = &elems[&i];

        // --- RPC ---
        // Sliver components (no volume to speak of) are numerical artifacts.
        let real_components: Vec<usize> = cc
            .rpc
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.volume > ghost_volume)
            .map(|(k, _)| k)
            .collect();
        let rpc_cc = real_components.len() as u32;
        if rpc_cc > 1 {
            // Own component: the one whose centroid is closest to the center.
            let own = real_components
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    (cc.rpc.components[a].centroid - si.center)
                        .norm()
                        .total_cmp(&(cc.rpc.components[b].centroid - si.center).norm())
                })
                .unwrap();
            let candidates: Vec<(Point, usize)> = real_components
                .iter()
                .copied()
                .filter(|&k| k != own)
                .flat_map(|k| cc.rpc.components[k].surface_points.iter().copied())
                .collect();
            if candidates.is_empty() {
                return Err(TopoError::InternalVoid { sphere: i });
            }
            let (pin, sti) = choose_pin(&candidates, spheres, &mut rng);
            outcome.report.violations.push(TopoViolation {
                sphere: i,
                element: "rpc".into(),
                kind: ViolationKind::CcNotOne { cc: rpc_cc },
                evidence: Some(pin.coords.into()),
            });
            push_candidate(
                pin,
                mesh.surface_tris[sti].normal,
                InsertionCause::RpcCc { sphere: i },
                &mut outcome,
                &mut accepted_centers,
            );
        } else if el.rpc_euler != one {
            // Pin at the surface fragment of this RPC farthest from the center.
            let frags = surface_fragments(rpd, mesh, i);
            let far = frags.iter().max_by(|a, b| {
                let da = (polygon_mid(&a.polygon) - si.center).norm();
                let db = (polygon_mid(&b.polygon) - si.center).norm();
                da.total_cmp(&db)
            });
            let Some(far) = far else {
                let total: f64 = cc.rpc.components.iter().map(|c| c.volume).sum();
                if total <= ghost_volume {
                    continue; // sliver-only cell, nothing real to fix
                }
                return Err(TopoError::InternalVoid { sphere: i });
            };
            let pin = polygon_mid(&far.polygon);
            outcome.report.violations.push(TopoViolation {
                sphere: i,
                element: "rpc".into(),
                kind: ViolationKind::EulerNotOne,
                evidence: Some(pin.coords.into()),
            });
            push_candidate(
                pin,
                far.normal,
                InsertionCause::RpcEuler { sphere: i },
                &mut outcome,
                &mut accepted_centers,
            );
        }

        // --- RPFs (each unordered pair handled from its smaller side) ---
        for (&j, comps) in &cc.rpf {
            if i > j {
                continue;
            }
            let euler = el.rpf_euler.get(&j).copied().unwrap_or_else(|| frac(0, 1));
            let violation = if comps.cc() > 1 {
                Some(ViolationKind::CcNotOne { cc: comps.cc() })
            } else if euler != one {
                Some(ViolationKind::EulerNotOne)
            } else {
                None
            };
            let Some(kind) = violation else { continue };
            let Some((pin, normal)) = element_pin(mesh, &comps.components, spheres, &mut rng)
            else {
                continue;
            };
            outcome.report.violations.push(TopoViolation {
                sphere: i,
                element: format!("rpf({i},{j})"),
                kind,
                evidence: Some(pin.coords.into()),
            });
            let cause = match kind {
                ViolationKind::CcNotOne { .. } => InsertionCause::RpfCc { pair: (i, j) },
                ViolationKind::EulerNotOne => InsertionCause::RpfEuler { pair: (i, j) },
            };
            push_candidate(pin, normal, cause, &mut outcome, &mut accepted_centers);
        }

        // --- RPEs ---
        for (&(j, k), comps) in &cc.rpe {
            if i > j || i > k {
                continue;
            }
            let key = ordered(j, k);
            let euler = el.rpe_euler.get(&key).copied().unwrap_or_else(|| frac(0, 1));
            let violation = if comps.cc() > 1 {
                Some(ViolationKind::CcNotOne { cc: comps.cc() })
            } else if euler != one {
                Some(ViolationKind::EulerNotOne)
            } else {
                None
            };
            let Some(kind) = violation else { continue };
            let Some((pin, normal)) = element_pin(mesh, &comps.components, spheres, &mut rng)
            else {
                continue;
            };
            outcome.report.violations.push(TopoViolation {
                sphere: i,
                element: format!("rpe({i},{j},{k})"),
                kind,
                evidence: Some(pin.coords.into()),
            });
            let cause = match kind {
                ViolationKind::CcNotOne { .. } => InsertionCause::RpeCc { triple: (i, j, k) },
                ViolationKind::EulerNotOne => InsertionCause::RpeEuler { triple: (i, j, k) },
            };
            push_candidate(pin, normal, cause, &mut outcome, &mut accepted_centers);
        }
    }

    Ok(outcome)
}

/// Run the topology stage alone until no violations remain (or `max_rounds`
/// passes). Inserts repair spheres into `spheres` and updates the RPD
/// partially after each batch. Returns the causes of every insertion in
/// order.
pub fn run_topology_loop(
    rpd: &mut crate::rpd::Rpd,
    mesh: &TetMesh,
    payloads: &crate::topo::TetPayloads,
    spheres: &mut SphereSet,
    params: &TopoParams,
    max_rounds: usize,
) -> Result<Vec<InsertionCause>, TopoError> {
    let mut causes = Vec::new();
    for _ in 0..max_rounds {
        let outcome = check_and_fix_topology(rpd, mesh, spheres, params)?;
        if outcome.new_spheres.is_empty() {
            break;
        }
        let mut ids = std::collections::BTreeSet::new();
        for s in outcome.new_spheres {
            ids.insert(spheres.insert(s));
        }
        causes.extend(outcome.causes);
        rpd.update_partial(mesh, payloads, spheres, &ids);
    }
    Ok(causes)
}

/// Pure check: the report of `check_and_fix_topology` without proposing
/// fixes.
pub fn check_topology(
    rpd: &Rpd,
    mesh: &TetMesh,
    spheres: &SphereSet,
) -> Result<TopoReport, TopoError> {
    let mut params = TopoParams::for_mesh(mesh);
    params.eps_dup = f64::INFINITY; // candidates all dropped
    check_and_fix_topology(rpd, mesh, spheres, &params).map(|o| o.report)
}

fn polygon_mid(poly: &[Point]) -> Point {
    let sum = poly
        .iter()
        .fold(crate::math::Vec3::zeros(), |acc, p| acc + p.coords);
    Point::from(sum / poly.len().max(1) as f64)
}

/// Deterministic pin choice: the candidate farthest from all existing sphere
/// centers (or a seeded-random one when requested).
fn choose_pin(
    candidates: &[(Point, usize)],
    spheres: &SphereSet,
    rng: &mut Option<ChaCha8Rng>,
) -> (Point, usize) {
    if let Some(rng) = rng {
        return candidates[rng.gen_range(0..candidates.len())];
    }
    *candidates
        .iter()
        .max_by(|a, b| {
            spheres
                .min_center_distance(&a.0)
                .total_cmp(&spheres.min_center_distance(&b.0))
        })
        .unwrap()
}

/// Surface pin for an RPF/RPE violation: prefer surface points collected on
/// the element's components; fall back to the surface point nearest the
/// component centroid.
fn element_pin(
    mesh: &TetMesh,
    components: &[Component],
    spheres: &SphereSet,
    rng: &mut Option<ChaCha8Rng>,
) -> Option<(Point, crate::math::Vec3)> {
    let candidates: Vec<(Point, usize)> = components
        .iter()
        .flat_map(|c| c.surface_points.iter().copied())
        .collect();
    if !candidates.is_empty() {
        let (pin, sti) = choose_pin(&candidates, spheres, rng);
        return Some((pin, mesh.surface_tris[sti].normal));
    }
    // Deep-interior element: walk to the nearest boundary point.
    let centroid = components.first()?.centroid;
    let (pin, sti) = mesh.nearest_surface_point(&centroid);
    Some((pin, mesh.surface_tris[sti].normal))
}
