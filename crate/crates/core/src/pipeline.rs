//! Pipeline driver: init spheres, then iterate topology, feature, and
//! geometry preservation until no stage inserts a sphere.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::features::{
    preserve_external_features, preserve_internal_features, segment_features, FeatureParams,
    FeatureSegment,
};
use crate::geometry::{geometry_check_and_insert, GeometryParams, GeometryRoundStats};
use crate::math::Point;
use crate::medial::{extract_dual, thin_medial_mesh, MedialMesh};
use crate::mesh::{
    detect_features, load_tet_mesh, read_feature_sidecar, MeshError, MeshFormat, SampleKind,
    SurfaceSample, TetMesh,
};
use crate::rpd::Rpd;
use crate::sphere::{sphere_shrink, MedialSphere, SphereId, SphereSet};
use crate::topo::{
    check_and_fix_topology, check_topology, init_fractional_euler, InsertionCause, TetPayloads,
    TopoError, TopoParams, TopoReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum InitMode {
    /// Farthest-point seeding over surface samples (default; avoids
    /// pathological clustering).
    Fps,
    /// Uniform random pins.
    Random,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub n_init: usize,
    /// Geometric error bound, percent of the bbox diagonal.
    pub delta_eps: f64,
    pub angle_threshold_deg: f64,
    /// Surface samples per unit area (normalized coordinates).
    pub sample_density: f64,
    pub seed: u64,
    pub max_rounds: usize,
    pub init_mode: InitMode,
    /// Random topology pins (paper behavior) instead of farthest-point.
    pub random_pins: bool,
    /// Contouring grid resolution for the reconstruction.
    pub grid_resolution: usize,
    pub hausdorff_samples_per_tri: usize,
    /// Skip reconstruction/Hausdorff metrics (used by fast tests).
    pub compute_metrics: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_init: 50,
            delta_eps: 0.6,
            angle_threshold_deg: 30.0,
            sample_density: 5e-4,
            seed: 0,
            max_rounds: 200,
            init_mode: InitMode::Fps,
            random_pins: false,
            grid_resolution: 256,
            hausdorff_samples_per_tri: 16,
            compute_metrics: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("topology stage: {0}")]
    Topo(#[from] TopoError),
    #[error("no surface samples produced; raise --sample-density")]
    NoSamples,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ExitStatus {
    Fixpoint,
    MaxRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Stage {
    Init,
    Topology,
    ExternalFeatures,
    InternalFeatures,
    Geometry,
}

/// One sphere insertion, for reporting and tests.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InsertionEvent {
    pub round: usize,
    pub stage: Stage,
    pub sphere: SphereId,
    pub cause: Option<InsertionCause>,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct StageTimings {
    pub s_topo: f64,
    pub s_extf: f64,
    pub s_intf: f64,
    pub s_geo: f64,
    pub total: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RoundStats {
    pub round: usize,
    pub inserted_topo: usize,
    pub inserted_extf: usize,
    pub inserted_intf: usize,
    pub inserted_geo: usize,
    pub geometry: Option<GeometryRoundStats>,
    /// Surface samples within the bound after this round.
    pub satisfied_samples: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PipelineStats {
    pub n_tets: usize,
    pub n_spheres: usize,
    pub n_rpd_rounds: u32,
    pub exit: ExitStatus,
    pub timings: StageTimings,
    pub rounds: Vec<RoundStats>,
    pub events: Vec<InsertionEvent>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricsReport {
    pub eps1: f64,
    pub eps2: f64,
    pub eps_max: f64,
    pub euler: i64,
    pub n_spheres: usize,
}

pub struct PipelineResult {
    pub mesh: TetMesh,
    pub payloads: TetPayloads,
    pub spheres: SphereSet,
    pub rpd: Rpd,
    pub medial: MedialMesh,
    pub metrics: Option<MetricsReport>,
    pub stats: PipelineStats,
    pub samples: Vec<SurfaceSample>,
    pub segments: Vec<FeatureSegment>,
    pub reports: Vec<TopoReport>,
}

impl PipelineResult {
    /// Re-assert the fixpoint invariants (used by tests and `--report`).
    pub fn final_topology_report(&self) -> Result<TopoReport, TopoError> {
        check_topology(&self.rpd, &self.mesh, &self.spheres)
    }
}

/// Load a mesh file (with optional `.fea` sidecar) and run the pipeline.
pub fn run_pipeline(
    input: &Path,
    format: Option<MeshFormat>,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let format = format
        .or_else(|| MeshFormat::from_path(input))
        .ok_or_else(|| MeshError::Parse {
            line: 0,
            msg: "unknown input format; pass --format".into(),
        })?;
    let mut mesh = load_tet_mesh(input, format)?;
    if !read_feature_sidecar(&mut mesh, input)? {
        detect_features(&mut mesh, config.angle_threshold_deg);
    }
    run_pipeline_on_mesh(mesh, config)
}

/// Run the pipeline on an in-memory mesh. Features are detected with the
/// configured threshold unless the mesh is already annotated.
pub fn run_pipeline_on_mesh(
    mut mesh: TetMesh,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let t_start = Instant::now();
    if mesh.feature_edges.is_empty() && mesh.corners.is_empty() {
        detect_features(&mut mesh, config.angle_threshold_deg);
    }
    let payloads = init_fractional_euler(&mesh);
    let samples = crate::mesh::sample_surface(&mesh, config.sample_density, config.seed);
    if samples.is_empty() {
        return Err(PipelineError::NoSamples);
    }

    let mut topo_params = TopoParams::for_mesh(&mesh);
    if config.random_pins {
        topo_params.random_seed = Some(config.seed);
    }
    let feature_params = FeatureParams::for_mesh(&mesh);
    let geometry_params = GeometryParams::new(&mesh, config.delta_eps);
    let segments = segment_features(&mesh, feature_params.h_fea);

    let mut spheres = SphereSet::new();
    let mut stats = PipelineStats {
        n_tets: mesh.tets.len(),
        n_spheres: 0,
        n_rpd_rounds: 0,
        exit: ExitStatus::MaxRounds,
        timings: StageTimings::default(),
        rounds: Vec::new(),
        events: Vec::new(),
    };

    // ---- Initial spheres: shrink at seeded pins. ----
    for pin in initial_pins(&samples, config) {
        let sample = &samples[pin];
        let Ok(res) = sphere_shrink(&mesh, sample.position, sample.normal, &topo_params.shrink)
        else {
            continue;
        };
        if spheres.min_center_distance(&res.sphere.center) < topo_params.eps_dup {
            continue;
        }
        let id = spheres.insert(res.sphere);
        stats.events.push(InsertionEvent {
            round: 0,
            stage: Stage::Init,
            sphere: id,
            cause: None,
        });
    }
    let mut rpd = Rpd::compute(&mesh, &payloads, &spheres);
    stats.n_rpd_rounds += 1;

    let mut reports = Vec::new();
    let apply = |rpd: &mut Rpd,
                     spheres: &mut SphereSet,
                     batch: Vec<MedialSphere>,
                     round: usize,
                     stage: Stage,
                     causes: Option<&[InsertionCause]>,
                     stats: &mut PipelineStats|
     -> usize {
        if batch.is_empty() {
            return 0;
        }
        let mut ids = BTreeSet::new();
        for (k, s) in batch.into_iter().enumerate() {
            let id = spheres.insert(s);
            ids.insert(id);
            stats.events.push(InsertionEvent {
                round,
                stage,
                sphere: id,
                cause: causes.and_then(|c| c.get(k).cloned()),
            });
        }
        rpd.update_partial(&mesh, &payloads, spheres, &ids);
        stats.n_rpd_rounds += 1;
        ids.len()
    };

    // ---- Main loop: topology -> external features -> internal features ->
    // geometry, until a full round inserts nothing. ----
    let mut exit = ExitStatus::MaxRounds;
    for round in 1..=config.max_rounds {
        let t0 = Instant::now();
        let outcome = check_and_fix_topology(&rpd, &mesh, &spheres, &topo_params)?;
        reports.push(outcome.report.clone());
        let inserted_topo = apply(
            &mut rpd,
            &mut spheres,
            outcome.new_spheres,
            round,
            Stage::Topology,
            Some(&outcome.causes),
            &mut stats,
        );
        stats.timings.s_topo += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let batch = preserve_external_features(&mesh, &spheres, &segments, &feature_params);
        let inserted_extf = apply(
            &mut rpd,
            &mut spheres,
            batch,
            round,
            Stage::ExternalFeatures,
            None,
            &mut stats,
        );
        stats.timings.s_extf += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let mm = thinned_dual(&rpd, &spheres);
        let batch = preserve_internal_features(
            &rpd,
            &mesh,
            &spheres,
            &mm,
            &feature_params,
            config.seed ^ (round as u64).wrapping_mul(0x9e3779b97f4a7c15),
        );
        let inserted_intf = apply(
            &mut rpd,
            &mut spheres,
            batch,
            round,
            Stage::InternalFeatures,
            None,
            &mut stats,
        );
        stats.timings.s_intf += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let mm = thinned_dual(&rpd, &spheres);
        let geo = geometry_check_and_insert(&mesh, &spheres, &mm, &samples, &geometry_params);
        let satisfied_samples = geo.satisfied.iter().filter(|&&s| s).count();
        let geometry_stats = geo.stats.clone();
        let inserted_geo = apply(
            &mut rpd,
            &mut spheres,
            geo.new_spheres,
            round,
            Stage::Geometry,
            None,
            &mut stats,
        );
        stats.timings.s_geo += t0.elapsed().as_secs_f64();

        stats.rounds.push(RoundStats {
            round,
            inserted_topo,
            inserted_extf,
            inserted_intf,
            inserted_geo,
            geometry: Some(geometry_stats),
            satisfied_samples,
        });

        if inserted_topo + inserted_extf + inserted_intf + inserted_geo == 0 {
            exit = ExitStatus::Fixpoint;
            break;
        }
    }

    let medial = thinned_dual(&rpd, &spheres);
    let metrics = if config.compute_metrics && !medial.vertices.is_empty() {
        let (recon, _thin_warning) =
            crate::medial::reconstruct_envelope(&medial, &spheres, config.grid_resolution);
        let surface = crate::medial::recon::boundary_mesh(&mesh);
        if recon.triangles.is_empty() {
            None
        } else {
            let (eps1, eps2, eps_max) =
                crate::medial::hausdorff(&surface, &recon, config.hausdorff_samples_per_tri);
            Some(MetricsReport {
                eps1,
                eps2,
                eps_max,
                euler: medial.euler(),
                n_spheres: spheres.n_active(),
            })
        }
    } else {
        None
    };

    stats.exit = exit;
    stats.n_spheres = spheres.n_active();
    stats.timings.total = t_start.elapsed().as_secs_f64();
    Ok(PipelineResult {
        mesh,
        payloads,
        spheres,
        rpd,
        medial,
        metrics,
        stats,
        samples,
        segments,
        reports,
    })
}

fn thinned_dual(rpd: &Rpd, spheres: &SphereSet) -> MedialMesh {
    let mut mm = extract_dual(rpd);
    thin_medial_mesh(&mut mm, spheres);
    mm
}

/// Seed pins for the initial spheres: farthest-point sampling (or a seeded
/// random draw) over the interior surface samples.
fn initial_pins(samples: &[SurfaceSample], config: &PipelineConfig) -> Vec<usize> {
    let interior: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].kind == SampleKind::Interior)
        .collect();
    let pool: Vec<usize> = if interior.is_empty() {
        (0..samples.len()).collect()
    } else {
        interior
    };
    let n = config.n_init.min(pool.len()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match config.init_mode {
        InitMode::Random => {
            let mut pool = pool;
            pool.shuffle(&mut rng);
            pool.truncate(n);
            pool
        }
        InitMode::Fps => {
            let mut chosen: Vec<usize> = Vec::with_capacity(n);
            let first = *pool.choose(&mut rng).unwrap();
            chosen.push(first);
            let mut dist: Vec<f64> = pool
                .iter()
                .map(|&i| (samples[i].position - samples[first].position).norm())
                .collect();
            while chosen.len() < n {
                let (best_k, _) = dist
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap();
                let next = pool[best_k];
                if chosen.contains(&next) {
                    break;
                }
                chosen.push(next);
                for (k, &i) in pool.iter().enumerate() {
                    dist[k] = dist[k]
                        .min((samples[i].position - samples[next].position).norm());
                }
            }
            chosen
        }
    }
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// Everything `export_all` wrote, for reporting.
pub struct ExportPaths {
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExportOptions {
    pub rpd_debug: bool,
    pub report: bool,
}

/// Top-level stats file mirroring the runtime-table columns.
#[derive(Debug, Clone, serde::Serialize)]
struct StatsFile {
    n_tets: usize,
    n_spheres: usize,
    n_rpd_rounds: u32,
    s_topo: f64,
    s_extf: f64,
    s_intf: f64,
    s_geo: f64,
    total: f64,
}

/// Write `.ma`, sphere list, feature polylines, reconstruction, stats, and
/// optional debug exports into `out_dir`.
pub fn export_all(
    result: &PipelineResult,
    out_dir: &Path,
    opts: &ExportOptions,
) -> Result<ExportPaths, PipelineError> {
    use std::fs;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let transform = &result.mesh.transform;

    let ma_path = out_dir.join("medial.ma");
    let mut f = fs::File::create(&ma_path)?;
    crate::medial::write_ma(&result.medial, &result.spheres, transform, &mut f)?;
    files.push(ma_path);

    let sph_path = out_dir.join("spheres.sph");
    let mut f = fs::File::create(&sph_path)?;
    crate::sphere::write_sph(&result.spheres, transform, &mut f)?;
    files.push(sph_path);

    let stats_path = out_dir.join("stats.json");
    let stats = StatsFile {
        n_tets: result.stats.n_tets,
        n_spheres: result.stats.n_spheres,
        n_rpd_rounds: result.stats.n_rpd_rounds,
        s_topo: result.stats.timings.s_topo,
        s_extf: result.stats.timings.s_extf,
        s_intf: result.stats.timings.s_intf,
        s_geo: result.stats.timings.s_geo,
        total: result.stats.timings.total,
    };
    fs::write(&stats_path, serde_json::to_string_pretty(&stats)?)?;
    files.push(stats_path);

    let rounds_path = out_dir.join("rounds.json");
    fs::write(
        &rounds_path,
        serde_json::to_string_pretty(&result.stats.rounds)?,
    )?;
    files.push(rounds_path);

    if let Some(metrics) = &result.metrics {
        let metrics_path = out_dir.join("metrics.json");
        fs::write(&metrics_path, serde_json::to_string_pretty(metrics)?)?;
        files.push(metrics_path);

        let (recon, _) = crate::medial::reconstruct_envelope(
            &result.medial,
            &result.spheres,
            // Re-derive at the export: cheap relative to the pipeline.
            256,
        );
        let obj_path = out_dir.join("reconstruction.obj");
        let mut f = fs::File::create(&obj_path)?;
        let denorm = TriangleMeshDenorm {
            mesh: &recon,
            transform,
        };
        denorm.write_obj(&mut f)?;
        files.push(obj_path);
    }

    // Feature polylines: external (zero-radius chains) in one file, internal
    // (seam edges between TN spheres) in another.
    let (ext, int) = feature_curves(result);
    for (name, lines) in [("features_external.obj", ext), ("features_internal.obj", int)] {
        let path = out_dir.join(name);
        let mut f = fs::File::create(&path)?;
        write_polylines_obj(&lines, transform, &mut f)?;
        files.push(path);
    }

    if opts.report {
        let report_path = out_dir.join("report.jsonl");
        let mut text = String::new();
        for report in &result.reports {
            let lines = report.to_json_lines();
            if !lines.is_empty() {
                text.push_str(&lines);
                text.push('\n');
            }
        }
        fs::write(&report_path, text)?;
        files.push(report_path);
    }

    if opts.rpd_debug {
        let dir = out_dir.join("rpd");
        fs::create_dir_all(&dir)?;
        let mut summary: std::collections::BTreeMap<SphereId, serde_json::Value> =
            Default::default();
        for id in result.rpd.nonempty_spheres() {
            let mut obj = String::new();
            let mut n_facets = 0usize;
            let mut n_cells = 0usize;
            let mut volume = 0.0;
            let mut vert_base = 1usize;
            for (_t, cell) in result.rpd.cells_of_sphere(id) {
                n_cells += 1;
                volume += cell.volume();
                for p in cell.active_planes() {
                    let poly = cell.facet_polygon(p);
                    if poly.len() < 3 {
                        continue;
                    }
                    n_facets += 1;
                    for q in &poly {
                        let o = transform.to_original(q);
                        obj.push_str(&format!("v {:.9} {:.9} {:.9}\n", o.x, o.y, o.z));
                    }
                    for k in 1..poly.len() - 1 {
                        obj.push_str(&format!(
                            "f {} {} {}\n",
                            vert_base,
                            vert_base + k,
                            vert_base + k + 1
                        ));
                    }
                    vert_base += poly.len();
                }
            }
            fs::write(dir.join(format!("sphere_{id}.obj")), obj)?;
            summary.insert(
                id,
                serde_json::json!({
                    "volume": volume / transform.scale.powi(3),
                    "n_cells": n_cells,
                    "n_facets": n_facets,
                }),
            );
        }
        let summary_path = out_dir.join("rpd_summary.json");
        fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
        files.push(summary_path);
    }

    Ok(ExportPaths { files })
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

struct TriangleMeshDenorm<'a> {
    mesh: &'a crate::medial::TriangleMesh,
    transform: &'a crate::mesh::Normalization,
}

impl TriangleMeshDenorm<'_> {
    fn write_obj(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for v in &self.mesh.vertices {
            let o = self.transform.to_original(v);
            writeln!(w, "v {:.9} {:.9} {:.9}", o.x, o.y, o.z)?;
        }
        for t in &self.mesh.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

/// Medial-mesh edges split into external feature chains (both endpoints
/// zero-radius) and internal seams (both endpoints TN spheres).
fn feature_curves(result: &PipelineResult) -> (Vec<[Point; 2]>, Vec<[Point; 2]>) {
    let mut ext = Vec::new();
    let mut int = Vec::new();
    for &(a, b) in &result.medial.edges {
        let sa = result.spheres.get(a);
        let sb = result.spheres.get(b);
        let seg = [sa.center, sb.center];
        if sa.kind.is_feature() && sb.kind.is_feature() {
            ext.push(seg);
        } else if matches!(sa.kind, crate::sphere::SphereKind::Tn(_))
            && matches!(sb.kind, crate::sphere::SphereKind::Tn(_))
        {
            int.push(seg);
        }
    }
    (ext, int)
}

fn write_polylines_obj(
    lines: &[[Point; 2]],
    transform: &crate::mesh::Normalization,
    mut w: impl std::io::Write,
) -> std::io::Result<()> {
    for seg in lines {
        for p in seg {
            let o = transform.to_original(p);
            writeln!(w, "v {:.9} {:.9} {:.9}", o.x, o.y, o.z)?;
        }
    }
    for k in 0..lines.len() {
        writeln!(w, "l {} {}", 2 * k + 1, 2 * k + 2)?;
    }
    Ok(())
}
