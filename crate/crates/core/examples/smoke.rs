
use mattopo::pipeline::{run_pipeline_on_mesh, PipelineConfig};
use mattopo::synth;

fn main() {
    let mesh = synth::torus_grid(12, 4, 3, 1.0);
    for (label, angle, delta) in [("featureless", 150.0, 1.5), ("featured", 30.0, 1.5)] {
        let config = PipelineConfig {
            n_init: 1, delta_eps: delta, sample_density: 2e-4, seed: 7,
            angle_threshold_deg: angle,
            max_rounds: 60, compute_metrics: false, ..Default::default()
        };
        let t0 = std::time::Instant::now();
        match run_pipeline_on_mesh(mesh.clone(), &config) {
            Ok(r) => {
                eprintln!("{label}: exit {:?} in {:.1?} spheres {} | mm euler {} comps {} | rounds {}",
                    r.stats.exit, t0.elapsed(), r.stats.n_spheres,
                    r.medial.euler(), r.medial.n_components(), r.stats.rounds.len());
                for rs in r.stats.rounds.iter() {
                    eprintln!("  round {}: topo {} extf {} intf {} geo {} sat {}/{}",
                        rs.round, rs.inserted_topo, rs.inserted_extf, rs.inserted_intf, rs.inserted_geo,
                        rs.satisfied_samples, r.samples.len());
                }
                let report = r.final_topology_report().unwrap();
                eprintln!("  final violations: {}", report.violations.len());
            }
            Err(e) => eprintln!("{label}: ERROR {e}"),
        }
    }
}
