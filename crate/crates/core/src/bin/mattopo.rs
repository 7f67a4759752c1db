use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mattopo::mesh::MeshFormat;
use mattopo::pipeline::{
    export_all, run_pipeline, ExitStatus, ExportOptions, InitMode, PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "mattopo",
    about = "Topology-preserving medial axis transform via volumetric restricted power diagrams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Mesh,
    Tet,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Fps,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the medial mesh of a tetrahedralized solid.
    Run {
        /// Input tet mesh (.mesh MEDIT or .tet plain text).
        #[arg(long)]
        input: PathBuf,
        /// Input format (inferred from the extension when omitted).
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Number of initial shrink spheres.
        #[arg(long = "init-spheres", default_value_t = 50)]
        init_spheres: usize,
        /// Geometric error bound, percent of the bounding-box diagonal.
        #[arg(long = "delta-eps", default_value_t = 0.6)]
        delta_eps: f64,
        /// Sharp-feature dihedral threshold in degrees.
        #[arg(long = "angle-deg", default_value_t = 30.0)]
        angle_deg: f64,
        /// Surface samples per unit area (normalized units).
        #[arg(long = "sample-density", default_value_t = 5e-4)]
        sample_density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "max-rounds", default_value_t = 200)]
        max_rounds: usize,
        /// Worker threads (0 = all cores). MATTOPO_THREADS overrides.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Output directory.
        #[arg(long, default_value = "mattopo_out")]
        out: PathBuf,
        /// Initial pin placement.
        #[arg(long, value_enum, default_value = "fps")]
        init: InitArg,
        /// Contouring grid resolution for the reconstruction.
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// Export per-sphere RPD cell meshes and a summary.
        #[arg(long = "export-rpd")]
        export_rpd: bool,
        /// Export the topology violation report (JSON lines).
        #[arg(long)]
        report: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            input,
            format,
            init_spheres,
            delta_eps,
            angle_deg,
            sample_density,
            seed,
            max_rounds,
            threads,
            out,
            init,
            grid,
            export_rpd,
            report,
        } => {
            let threads = std::env::var("MATTOPO_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .unwrap_or(threads);
            let pool = {
                let mut builder = rayon::ThreadPoolBuilder::new();
                if threads > 0 {
                    builder = builder.num_threads(threads);
                }
                match builder.build() {
                    Ok(p) => p,
                    Err(e) => {
                        eprintln!("error: failed to build thread pool: {e}");
                        return ExitCode::from(1);
                    }
                }
            };

            let config = PipelineConfig {
                n_init: init_spheres,
                delta_eps,
                angle_threshold_deg: angle_deg,
                sample_density,
                seed,
                max_rounds,
                init_mode: match init {
                    InitArg::Fps => InitMode::Fps,
                    InitArg::Random => InitMode::Random,
                },
                random_pins: false,
                grid_resolution: grid,
                ..PipelineConfig::default()
            };
            let format = format.map(|f| match f {
                FormatArg::Mesh => MeshFormat::Medit,
                FormatArg::Tet => MeshFormat::Tet,
            });

            let result = pool.install(|| run_pipeline(&input, format, &config));
            let result = match result {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };

            let opts = ExportOptions {
                rpd_debug: export_rpd,
                report,
            };
            match export_all(&result, &out, &opts) {
                Ok(paths) => {
                    for p in &paths.files {
                        println!("wrote {}", p.display());
                    }
                }
                Err(e) => {
                    eprintln!("error: export failed: {e}");
                    return ExitCode::from(1);
                }
            }

            let stats = &result.stats;
            println!(
                "spheres: {}  medial: {}v/{}e/{}f  euler: {}  rpd updates: {}  rounds: {}",
                stats.n_spheres,
                result.medial.vertices.len(),
                result.medial.edges.len(),
                result.medial.faces.len(),
                result.medial.euler(),
                stats.n_rpd_rounds,
                stats.rounds.len(),
            );
            if let Some(m) = &result.metrics {
                println!(
                    "eps1: {:.4}%  eps2: {:.4}%  eps_max: {:.4}%",
                    m.eps1, m.eps2, m.eps_max
                );
            }
            match stats.exit {
                ExitStatus::Fixpoint => ExitCode::SUCCESS,
                ExitStatus::MaxRounds => {
                    let last = stats.rounds.last();
                    eprintln!(
                        "warning: max rounds reached without fixpoint ({} insertions in the last round)",
                        last.map(|r| r.inserted_topo
                            + r.inserted_extf
                            + r.inserted_intf
                            + r.inserted_geo)
                            .unwrap_or(0)
                    );
                    ExitCode::from(2)
                }
            }
        }
    }
}
