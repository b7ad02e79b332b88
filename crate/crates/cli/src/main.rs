//! `pgs`: build probability grids, sample ray batches, evaluate surface
//! losses, benchmark interpolation and export grids.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::commands::ExportKind;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pgs", version, about = "Probability-guided ray sampler")]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, env = "PS_SAMPLER_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scene and camera grids.
    #[command(subcommand)]
    Grids(GridsCommand),
    /// Ray batches.
    #[command(subcommand)]
    Sample(SampleCommand),
    /// Surface losses.
    #[command(subcommand)]
    Loss(LossCommand),
    /// Timing.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Grid visualizations and dumps.
    #[command(subcommand)]
    Export(ExportCommand),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct GridsDir {
    /// Directory holding the grid dumps.
    #[arg(long, default_value = "grids")]
    grids: PathBuf,
}

#[derive(Debug, Subcommand)]
enum GridsCommand {
    /// Build the scene grid and one grid per camera.
    Build {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        dir: GridsDir,
        /// Training step; grids are rebuilt once per refresh window.
        #[arg(long, default_value_t = 0)]
        step: u64,
        /// Rebuild even if the grids are current.
        #[arg(long)]
        force: bool,
        /// Skip transmittance weighting.
        #[arg(long)]
        no_view_dependency: bool,
        /// Voxel SDF dump to use instead of the scene's shapes.
        #[arg(long)]
        sdf: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    dir: GridsDir,
    #[arg(long, default_value_t = 0)]
    step: u64,
    #[arg(long = "rays", short = 'n', default_value_t = 1024)]
    n_rays: usize,
}

#[derive(Debug, Subcommand)]
enum SampleCommand {
    /// Sample a batch of rays and write them as CSV.
    Rays {
        #[command(flatten)]
        batch: BatchArgs,
        /// Ray CSV; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Ray-point CSV.
        #[arg(long)]
        points: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum LossCommand {
    /// Evaluate the surface losses on a sampled batch; writes JSON.
    Eval {
        #[command(flatten)]
        batch: BatchArgs,
        /// Report path; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Voxel SDF dump to evaluate instead of the scene's shapes.
        #[arg(long)]
        sdf: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Time camera-grid interpolation at F = 1, 2, 4.
    Interp {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 0)]
        camera: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    dir: GridsDir,
    #[arg(long)]
    camera: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ExportCommand {
    /// PNG of the (u, v) marginal.
    Heatmap(ExportArgs),
    /// Every cell as CSV.
    Csv(ExportArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set up thread pool: {e}")))?;
    }
    match cli.command {
        Command::Grids(GridsCommand::Build {
            config,
            dir,
            step,
            force,
            no_view_dependency,
            sdf,
        }) => {
            let mut config = RunConfig::load(&config.config)?;
            if no_view_dependency {
                config.grids.view_dependency = false;
            }
            commands::build(
                &config,
                &commands::BuildArgs {
                    grids: &dir.grids,
                    step,
                    force,
                    sdf: sdf.as_deref(),
                },
            )
        }
        Command::Sample(SampleCommand::Rays { batch, out, points }) => {
            let config = RunConfig::load(&batch.config.config)?;
            commands::sample(
                &config,
                &commands::SampleArgs {
                    grids: &batch.dir.grids,
                    step: batch.step,
                    n_rays: batch.n_rays,
                    out: out.as_deref(),
                    points: points.as_deref(),
                },
            )
        }
        Command::Loss(LossCommand::Eval { batch, out, sdf }) => {
            let config = RunConfig::load(&batch.config.config)?;
            commands::loss_eval(
                &config,
                &commands::LossArgs {
                    grids: &batch.dir.grids,
                    step: batch.step,
                    n_rays: batch.n_rays,
                    out: out.as_deref(),
                    sdf: sdf.as_deref(),
                },
            )
        }
        Command::Bench(BenchCommand::Interp {
            config,
            camera,
            repeats,
            json,
        }) => {
            let config = RunConfig::load(&config.config)?;
            commands::bench(
                &config,
                &commands::BenchArgs {
                    camera,
                    repeats,
                    json: json.as_deref(),
                },
            )
        }
        Command::Export(cmd) => {
            let (kind, args) = match cmd {
                ExportCommand::Heatmap(a) => (ExportKind::Heatmap, a),
                ExportCommand::Csv(a) => (ExportKind::Csv, a),
            };
            commands::export(&args.dir.grids, kind, args.camera, &args.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
