//! Medial spheres and their generation: sphere-shrinking for sheet (T2)
//! spheres, linearized tangency least squares for seam/junction (TN)
//! spheres, and zero-radius feature spheres.

use nalgebra::{DMatrix, DVector};

use crate::math::{closest_point_on_segment, Point, Vec3};
use crate::mesh::TetMesh;

pub type SphereId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SphereKind {
    /// Sheet sphere, tangent at two surface regions.
    T2,
    /// Seam or junction sphere, tangent at `n >= 3` regions.
    Tn(u32),
    /// Zero-radius sphere pinned on a sharp edge.
    FeatureEdge,
    /// Zero-radius sphere pinned on a corner.
    Corner,
}

impl SphereKind {
    pub fn is_feature(&self) -> bool {
        matches!(self, SphereKind::FeatureEdge | SphereKind::Corner)
    }

    pub fn token(&self) -> String {
        match self {
            SphereKind::T2 => "t2".into(),
            SphereKind::Tn(n) => format!("tn{n}"),
            SphereKind::FeatureEdge => "edge".into(),
            SphereKind::Corner => "corner".into(),
        }
    }
}

/// A medial sphere: center, radius, classification, and the surface points
/// it is tangent to.
#[derive(Debug, Clone)]
pub struct MedialSphere {
    pub id: SphereId,
    pub center: Point,
    pub radius: f64,
    pub kind: SphereKind,
    /// (surface point, outward surface normal) pairs.
    pub tangent_points: Vec<(Point, Vec3)>,
    pub newly_inserted: bool,
    pub deleted: bool,
}

impl MedialSphere {
    pub fn new(center: Point, radius: f64, kind: SphereKind) -> Self {
        MedialSphere {
            id: u32::MAX,
            center,
            radius,
            kind,
            tangent_points: Vec::new(),
            newly_inserted: true,
            deleted: false,
        }
    }

    /// Power distance from this sphere to `p`: |p - center|^2 - r^2.
    pub fn power_distance(&self, p: &Point) -> f64 {
        (p - self.center).norm_squared() - self.radius * self.radius
    }

    /// Largest tangency violation |  |p - c| - r  | over the tangent points.
    pub fn tangency_error(&self) -> f64 {
        self.tangent_points
            .iter()
            .map(|(p, _)| ((p - self.center).norm() - self.radius).abs())
            .fold(0.0, f64::max)
    }
}

/// Stable-id sphere registry. Deleted spheres are tombstoned so ids stay
/// valid across partial RPD updates.
#[derive(Debug, Clone, Default)]
pub struct SphereSet {
    spheres: Vec<MedialSphere>,
}

impl SphereSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mut sphere: MedialSphere) -> SphereId {
        let id = self.spheres.len() as SphereId;
        sphere.id = id;
        self.spheres.push(sphere);
        id
    }

    pub fn get(&self, id: SphereId) -> &MedialSphere {
        &self.spheres[id as usize]
    }

    pub fn get_mut(&mut self, id: SphereId) -> &mut MedialSphere {
        &mut self.spheres[id as usize]
    }

    pub fn delete(&mut self, id: SphereId) {
        self.spheres[id as usize].deleted = true;
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.active().count()
    }

    pub fn active(&self) -> impl Iterator<Item = &MedialSphere> {
        self.spheres.iter().filter(|s| !s.deleted)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MedialSphere> {
        self.spheres.iter()
    }

    pub fn clear_new_flags(&mut self) {
        for s in &mut self.spheres {
            s.newly_inserted = false;
        }
    }

    /// Smallest center distance from `p` to any active sphere.
    pub fn min_center_distance(&self, p: &Point) -> f64 {
        self.active()
            .map(|s| (s.center - p).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Active sphere with minimal power distance to `p`.
    pub fn power_nearest(&self, p: &Point) -> Option<&MedialSphere> {
        self.active().min_by(|a, b| {
            a.power_distance(p)
                .total_cmp(&b.power_distance(p))
                .then(a.id.cmp(&b.id))
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SphereError {
    #[error("pin normal is degenerate")]
    DegeneratePinNormal,
    #[error("tangency system is rank deficient (planes nearly parallel)")]
    RankDeficient,
    #[error("need at least 3 tangent planes, got {0}")]
    TooFewPlanes(usize),
    #[error("position is not on a detected feature (distance {0:.3e})")]
    NotOnFeature(f64),
}

/// Abstract nearest-surface oracle so the shrinking loop can run against
/// both tet meshes and analytic test surfaces.
pub trait SurfaceQuery {
    /// Closest surface point to `p`.
    fn nearest_point(&self, p: &Point) -> Point;
    /// Scene scale (bounding-box diagonal) for tolerances.
    fn query_scale(&self) -> f64;
}

impl SurfaceQuery for TetMesh {
    fn nearest_point(&self, p: &Point) -> Point {
        self.nearest_surface_point(p).0
    }

    fn query_scale(&self) -> f64 {
        self.bbox_diag
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShrinkParams {
    /// Initial radius as a fraction of the scene scale.
    pub init_radius_factor: f64,
    /// Convergence threshold on the radius change, fraction of scene scale.
    pub eps_factor: f64,
    pub max_iters: usize,
}

impl Default for ShrinkParams {
    fn default() -> Self {
        ShrinkParams {
            init_radius_factor: 0.5,
            eps_factor: 1e-4,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShrinkResult {
    pub sphere: MedialSphere,
    pub converged: bool,
    pub iters: usize,
}

/// Sphere-shrinking: grow a large sphere tangent at `pin` along the inward
/// normal, then repeatedly pull it back through the nearest surface point
/// until the radius settles. The radius sequence is non-increasing.
pub fn sphere_shrink(
    surface: &impl SurfaceQuery,
    pin: Point,
    outward_normal: Vec3,
    params: &ShrinkParams,
) -> Result<ShrinkResult, SphereError> {
    let n_len = outward_normal.norm();
    if !(n_len > 0.5) {
        return Err(SphereError::DegeneratePinNormal);
    }
    let inward = -outward_normal / n_len;
    let scale = surface.query_scale();
    let eps = params.eps_factor * scale;

    let mut radius = params.init_radius_factor * scale;
    let mut last_q = pin;
    let mut converged = false;
    let mut iters = 0;

    for it in 0..params.max_iters {
        iters = it + 1;
        let center = pin + inward * radius;
        let q = surface.nearest_point(&center);
        let d = (q - center).norm();
        if d >= radius - eps {
            // Sphere is (within tolerance) empty of surface: tangent reached.
            last_q = q;
            converged = true;
            break;
        }
        // Sphere through pin (tangentially) and q: new center stays on the
        // inward normal line.
        let pq = q - pin;
        let denom = 2.0 * inward.dot(&pq);
        if denom <= 1e-12 * scale {
            // q (numerically) in the pin tangent plane; cannot shrink further.
            last_q = q;
            break;
        }
        let new_radius = pq.norm_squared() / denom;
        if !(new_radius > 0.0) || new_radius >= radius {
            last_q = q;
            converged = true;
            break;
        }
        let shrunk = radius - new_radius;
        radius = new_radius;
        last_q = q;
        if shrunk < eps {
            converged = true;
            break;
        }
    }

    let center = pin + inward * radius;
    let mut sphere = MedialSphere::new(center, radius, SphereKind::T2);
    let q_normal_dir = last_q - center;
    let q_normal = if q_normal_dir.norm() > 1e-12 {
        q_normal_dir / q_normal_dir.norm()
    } else {
        -inward
    };
    sphere.tangent_points = vec![(pin, -inward), (last_q, q_normal)];
    Ok(ShrinkResult {
        sphere,
        converged,
        iters,
    })
}

/// Sum of squared tangency violations of sphere (center, radius) against
/// planes given as (point, outward normal).
pub fn tn_residual(planes: &[(Point, Vec3)], center: &Point, radius: f64) -> f64 {
    planes
        .iter()
        .map(|(p, n)| {
            let v = n.dot(&(center - p)) + radius;
            v * v
        })
        .sum()
}

/// Least-squares sphere tangent to all given planes from the inner side:
/// minimizes sum_i (n_i . (theta - p_i) + r)^2 over (theta, r).
///
/// Underdetermined systems (rank 3) return the minimal-norm solution; rank
/// below 3 signals nearly parallel planes.
pub fn optimize_tn_sphere(
    planes: &[(Point, Vec3)],
    _init: Option<&MedialSphere>,
) -> Result<MedialSphere, SphereError> {
    if planes.len() < 3 {
        return Err(SphereError::TooFewPlanes(planes.len()));
    }
    let m = planes.len();
    let mut a = DMatrix::<f64>::zeros(m, 4);
    let mut b = DVector::<f64>::zeros(m);
    for (i, (p, n)) in planes.iter().enumerate() {
        a[(i, 0)] = n.x;
        a[(i, 1)] = n.y;
        a[(i, 2)] = n.z;
        a[(i, 3)] = 1.0;
        b[i] = n.dot(&p.coords);
    }
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-9 * max_sv.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < 3 {
        return Err(SphereError::RankDeficient);
    }
    let x = svd.solve(&b, tol).map_err(|_| SphereError::RankDeficient)?;
    let center = Point::new(x[0], x[1], x[2]);
    let radius = x[3];
    if radius < 0.0 {
        return Err(SphereError::RankDeficient);
    }

    let mut sphere = MedialSphere::new(center, radius, SphereKind::Tn(m as u32));
    sphere.tangent_points = planes
        .iter()
        .map(|(p, n)| {
            let foot = center - n * n.dot(&(center - p));
            (foot, *n)
        })
        .collect();
    Ok(sphere)
}

/// Zero-radius sphere at a feature position. Errors unless the position lies
/// on a detected feature edge or corner (tolerance 1e-6 x bbox diagonal).
pub fn make_feature_sphere(
    mesh: &TetMesh,
    position: Point,
    kind: SphereKind,
) -> Result<MedialSphere, SphereError> {
    debug_assert!(kind.is_feature());
    let tol = 1e-6 * mesh.bbox_diag;
    let mut best = f64::INFINITY;
    match kind {
        SphereKind::Corner => {
            for &c in &mesh.corners {
                best = best.min((mesh.vertices[c] - position).norm());
            }
        }
        _ => {
            for fe in &mesh.feature_edges {
                let q = closest_point_on_segment(
                    &position,
                    &mesh.vertices[fe.verts[0]],
                    &mesh.vertices[fe.verts[1]],
                );
                best = best.min((q - position).norm());
            }
        }
    }
    if best > tol {
        return Err(SphereError::NotOnFeature(best));
    }
    Ok(MedialSphere::new(position, 0.0, kind))
}

/// Write a sphere set as `.sph` text: one `id x y z r kind` line per active
/// sphere, in original (de-normalized) model coordinates.
pub fn write_sph(
    spheres: &SphereSet,
    transform: &crate::mesh::Normalization,
    mut w: impl std::io::Write,
) -> std::io::Result<()> {
    for s in spheres.active() {
        let c = transform.to_original(&s.center);
        writeln!(
            w,
            "{} {:.17} {:.17} {:.17} {:.17} {}",
            s.id,
            c.x,
            c.y,
            c.z,
            s.radius / transform.scale,
            s.kind.token()
        )?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_surfaces {
    use super::*;

    /// Analytic ball surface for shrink tests.
    pub struct AnalyticBall {
        pub center: Point,
        pub radius: f64,
    }

    impl SurfaceQuery for AnalyticBall {
        fn nearest_point(&self, p: &Point) -> Point {
            let d = p - self.center;
            let len = d.norm();
            if len < 1e-12 {
                self.center + Vec3::x() * self.radius
            } else {
                self.center + d * (self.radius / len)
            }
        }

        fn query_scale(&self) -> f64 {
            2.0 * self.radius * 3.0_f64.sqrt()
        }
    }

    /// Slab between z = z0 and z = z1 (infinite in x, y).
    pub struct AnalyticSlab {
        pub z0: f64,
        pub z1: f64,
    }

    impl SurfaceQuery for AnalyticSlab {
        fn nearest_point(&self, p: &Point) -> Point {
            let d0 = (p.z - self.z0).abs();
            let d1 = (self.z1 - p.z).abs();
            if d0 <= d1 {
                Point::new(p.x, p.y, self.z0)
            } else {
                Point::new(p.x, p.y, self.z1)
            }
        }

        fn query_scale(&self) -> f64 {
            (self.z1 - self.z0) * 10.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_surfaces::*;
    use super::*;
    use crate::synth;

    #[test]
    fn power_distance_examples() {
        let m = MedialSphere::new(Point::origin(), 1.0, SphereKind::T2);
        assert_eq!(m.power_distance(&Point::new(2.0, 0.0, 0.0)), 3.0);

        let z = MedialSphere::new(Point::new(1.0, 2.0, 3.0), 0.0, SphereKind::FeatureEdge);
        let p = Point::new(4.0, 5.0, 6.0);
        assert_eq!(z.power_distance(&p), (p - z.center).norm_squared());

        // Equal radii: power ordering equals Euclidean ordering.
        let a = MedialSphere::new(Point::origin(), 2.0, SphereKind::T2);
        let b = MedialSphere::new(Point::new(5.0, 0.0, 0.0), 2.0, SphereKind::T2);
        let q = Point::new(1.0, 1.0, 0.0);
        assert_eq!(
            a.power_distance(&q) < b.power_distance(&q),
            (q - a.center).norm() < (q - b.center).norm()
        );
    }

    #[test]
    fn power_plus_r2_is_norm_squared() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = MedialSphere::new(
                Point::new(rng.gen(), rng.gen(), rng.gen()),
                rng.gen::<f64>() * 3.0,
                SphereKind::T2,
            );
            let p = Point::new(rng.gen(), rng.gen(), rng.gen());
            let lhs = m.power_distance(&p) + m.radius * m.radius;
            assert!((lhs - (p - m.center).norm_squared()).abs() < 1e-12);
            assert!(lhs >= 0.0);
        }
    }

    #[test]
    fn shrink_in_analytic_ball() {
        let ball = AnalyticBall {
            center: Point::new(1.0, 2.0, 3.0),
            radius: 2.0,
        };
        let pin = Point::new(3.0, 2.0, 3.0);
        let res = sphere_shrink(&ball, pin, Vec3::x(), &ShrinkParams::default()).unwrap();
        assert!(res.converged);
        assert!((res.sphere.center - ball.center).norm() < 1e-6 * ball.radius);
        assert!((res.sphere.radius - ball.radius).abs() < 1e-6 * ball.radius);
    }

    #[test]
    fn shrink_in_analytic_slab() {
        let slab = AnalyticSlab { z0: 0.0, z1: 2.0 };
        let pin = Point::new(0.3, -0.7, 0.0);
        let res = sphere_shrink(&slab, pin, -Vec3::z(), &ShrinkParams::default()).unwrap();
        assert!(res.converged);
        assert!((res.sphere.center - Point::new(0.3, -0.7, 1.0)).norm() < 1e-6);
        assert!((res.sphere.radius - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shrink_radius_is_monotone() {
        // Instrumented run: repeat the loop manually and check monotonicity.
        struct Recorder<'a> {
            inner: &'a AnalyticSlab,
            calls: std::cell::RefCell<Vec<Point>>,
        }
        impl SurfaceQuery for Recorder<'_> {
            fn nearest_point(&self, p: &Point) -> Point {
                self.calls.borrow_mut().push(*p);
                self.inner.nearest_point(p)
            }
            fn query_scale(&self) -> f64 {
                self.inner.query_scale()
            }
        }
        let slab = AnalyticSlab { z0: 0.0, z1: 2.0 };
        let rec = Recorder {
            inner: &slab,
            calls: Default::default(),
        };
        let pin = Point::new(0.0, 0.0, 0.0);
        sphere_shrink(&rec, pin, -Vec3::z(), &ShrinkParams::default()).unwrap();
        // Centers walk down the normal line: radius = center.z must not increase.
        let calls = rec.calls.borrow();
        for w in calls.windows(2) {
            assert!(w[1].z <= w[0].z + 1e-12);
        }
    }

    #[test]
    fn shrink_in_cube_mesh_matches_distance_field_oracle() {
        let mesh = synth::voxel_cube(2, 1.0); // normalized to 1000^3
        // Pin at a face center; oracle: densely search the inward ray for the
        // largest sphere tangent at the pin that stays inside.
        let pin = Point::new(500.0, 500.0, 0.0);
        let res = sphere_shrink(&mesh, pin, -Vec3::z(), &ShrinkParams::default()).unwrap();
        assert!(res.converged);

        let mut best_t = 0.0;
        let steps = 4000;
        for i in 1..=steps {
            let t = 700.0 * i as f64 / steps as f64;
            let c = pin + Vec3::z() * t;
            let (q, _) = mesh.nearest_surface_point(&c);
            if (q - c).norm() >= t - 1e-6 {
                best_t = t;
            }
        }
        assert!(
            (res.sphere.radius - best_t).abs() < 2.0,
            "shrink radius {} vs oracle {}",
            res.sphere.radius,
            best_t
        );
        assert!((res.sphere.center - Point::new(500.0, 500.0, 500.0)).norm() < 1.0);
        assert!(res.sphere.tangency_error() <= 1e-3 * mesh.bbox_diag);
    }

    #[test]
    fn tn_three_orthogonal_planes() {
        let planes = vec![
            (Point::origin(), -Vec3::x()),
            (Point::origin(), -Vec3::y()),
            (Point::origin(), -Vec3::z()),
        ];
        let s = optimize_tn_sphere(&planes, None).unwrap();
        // Solution family is theta = (t,t,t), r = t; residual must vanish.
        assert!(tn_residual(&planes, &s.center, s.radius) < 1e-12);
        assert!((s.center.x - s.center.y).abs() < 1e-9);
        assert!((s.center.y - s.center.z).abs() < 1e-9);
        assert!((s.center.x - s.radius).abs() < 1e-9);
    }

    #[test]
    fn tn_regular_tetrahedron_insphere() {
        // Regular tetrahedron with unit edge; insphere radius a/(2 sqrt 6).
        let a = [
            Point::new(1.0, 1.0, 1.0),
            Point::new(1.0, -1.0, -1.0),
            Point::new(-1.0, 1.0, -1.0),
            Point::new(-1.0, -1.0, 1.0),
        ];
        let centroid = Point::new(0.0, 0.0, 0.0);
        let faces = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        let planes: Vec<(Point, Vec3)> = faces
            .iter()
            .map(|f| {
                let n = crate::math::tri_normal(&a[f[0]], &a[f[1]], &a[f[2]]);
                // Outward: away from centroid.
                let n = if n.dot(&(a[f[0]] - centroid)) < 0.0 { -n } else { n };
                (a[f[0]], n)
            })
            .collect();
        let s = optimize_tn_sphere(&planes, None).unwrap();
        let edge = (a[0] - a[1]).norm();
        let expected_r = edge / (2.0 * 6.0_f64.sqrt());
        assert!((s.center - centroid).norm() < 1e-9);
        assert!((s.radius - expected_r).abs() < 1e-9);
        assert_eq!(s.kind, SphereKind::Tn(4));
    }

    #[test]
    fn tn_two_planes_is_rank_deficient() {
        let planes = vec![
            (Point::origin(), -Vec3::x()),
            (Point::origin(), -Vec3::y()),
        ];
        assert!(matches!(
            optimize_tn_sphere(&planes, None),
            Err(SphereError::TooFewPlanes(2))
        ));
        // Three nearly parallel planes degrade the rank.
        let planes = vec![
            (Point::origin(), Vec3::z()),
            (Point::new(1.0, 0.0, 0.0), Vec3::z()),
            (Point::new(0.0, 1.0, 0.0), Vec3::z()),
        ];
        assert!(matches!(
            optimize_tn_sphere(&planes, None),
            Err(SphereError::RankDeficient)
        ));
    }

    #[test]
    fn tn_never_worsens_residual_vs_any_candidate() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let planes: Vec<(Point, Vec3)> = (0..5)
                .map(|_| {
                    let n = Vec3::new(
                        rng.gen::<f64>() - 0.5,
                        rng.gen::<f64>() - 0.5,
                        rng.gen::<f64>() - 0.5,
                    )
                    .normalize();
                    let p = Point::new(rng.gen(), rng.gen(), rng.gen());
                    (p, n)
                })
                .collect();
            if let Ok(s) = optimize_tn_sphere(&planes, None) {
                let opt = tn_residual(&planes, &s.center, s.radius);
                for _ in 0..20 {
                    let c = Point::new(rng.gen(), rng.gen(), rng.gen());
                    let r = rng.gen::<f64>();
                    assert!(opt <= tn_residual(&planes, &c, r) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn feature_sphere_validation() {
        let mut mesh = synth::voxel_cube(2, 1.0);
        crate::mesh::detect_features(&mut mesh, 30.0);
        // Corner of the normalized cube.
        let s = make_feature_sphere(&mesh, Point::new(0.0, 0.0, 0.0), SphereKind::Corner).unwrap();
        assert_eq!(s.radius, 0.0);
        // Midpoint of a cube edge.
        let s =
            make_feature_sphere(&mesh, Point::new(250.0, 0.0, 0.0), SphereKind::FeatureEdge)
                .unwrap();
        assert_eq!(s.kind, SphereKind::FeatureEdge);
        // Interior surface point: rejected.
        assert!(make_feature_sphere(
            &mesh,
            Point::new(500.0, 500.0, 0.0),
            SphereKind::FeatureEdge
        )
        .is_err());
    }
}
