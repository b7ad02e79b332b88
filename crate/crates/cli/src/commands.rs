use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use pgs_core::bench::{time_interpolation, time_ratio, BenchEntry};
use pgs_core::geometry::compute_bounds;
use pgs_core::image_grid::{build_camera_grid, RefreshSchedule};
use pgs_core::io::export::{
    write_grid_csv, write_heatmap_png, write_ray_points_csv, write_samples_csv,
};
use pgs_core::io::GridDump;
use pgs_core::losses::{total_surface_loss, RayEvaluation};
use pgs_core::sampler::{sample_batch, BatchOptions, CameraSampling, RaySample, RaySource};
use pgs_core::scene_grid::build_scene_grid;
use pgs_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{
    camera_dump_name, io_failure, load_camera_grid, load_grids, Manifest, Scene, SCENE_DUMP,
};
use crate::config::RunConfig;
use crate::error::CliError;

pub struct BuildArgs<'a> {
    pub grids: &'a Path,
    pub step: u64,
    pub force: bool,
    pub sdf: Option<&'a Path>,
}

/// Builds the scene grid and one camera grid per camera, unless the grid
/// directory already holds grids for the refresh window of `step`.
pub fn build(config: &RunConfig, args: &BuildArgs<'_>) -> Result<(), CliError> {
    let schedule = RefreshSchedule::new(config.schedule.refresh_interval)?;
    let epoch = schedule.epoch(args.step);
    if !args.force {
        if let Ok(existing) = Manifest::read(args.grids) {
            if existing.epoch == epoch && existing.complete(args.grids) {
                println!(
                    "grids in {} are current for refresh window {epoch}; nothing to do",
                    args.grids.display()
                );
                return Ok(());
            }
        }
    }

    let scene = Scene::load(config, args.sdf)?;
    std::fs::create_dir_all(args.grids).map_err(|e| io_failure(args.grids, e))?;

    let start = Instant::now();
    let scene_grid = build_scene_grid(
        scene.sdf.as_ref(),
        &scene.boundary,
        config.grids.scene_resolution,
        config.s,
    )?;
    println!(
        "scene grid {:?}: mass {:.6e} in {:.3}s",
        config.grids.scene_resolution,
        scene_grid.total_mass(),
        start.elapsed().as_secs_f64()
    );

    let options = config.grid_options();
    let results: Vec<_> = scene
        .cameras
        .par_iter()
        .enumerate()
        .map(|(id, cam)| {
            let start = Instant::now();
            let grid = build_camera_grid(&scene_grid, cam, id, &scene.boundary, &options);
            (grid, start.elapsed().as_secs_f64())
        })
        .collect();

    let mut manifest = Manifest {
        epoch,
        refresh_interval: schedule.interval(),
        s: config.s,
        partition_factor: config.grids.partition_factor,
        view_dependency: config.grids.view_dependency,
        cameras: Vec::new(),
        skipped: Vec::new(),
    };
    let mut dumps = Vec::new();
    for (id, (grid, seconds)) in results.into_iter().enumerate() {
        match grid {
            Ok(grid) => {
                let raw_mass: f64 = grid.raw_prob().iter().sum();
                println!("camera {id}: mass {raw_mass:.6e} in {seconds:.3}s");
                manifest.cameras.push(id);
                dumps.push((id, GridDump::from(&grid)));
            }
            Err(Error::EmptyGrid) => {
                eprintln!("warning: camera {id} sees no probability mass; skipped");
                manifest.skipped.push(id);
            }
            Err(e) => return Err(CliError::Core(e)),
        }
    }

    remove_stale_dumps(args.grids)?;
    GridDump::from(&scene_grid).write(&args.grids.join(SCENE_DUMP))?;
    for (id, dump) in &dumps {
        dump.write(&args.grids.join(camera_dump_name(*id)))?;
    }
    manifest.write(args.grids)?;
    println!(
        "wrote {} camera grids for refresh window {epoch} to {}",
        dumps.len(),
        args.grids.display()
    );
    Ok(())
}

fn remove_stale_dumps(dir: &Path) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_failure(dir, e))?;
    for entry in entries.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("camera_") && name.ends_with(".psgd") {
            std::fs::remove_file(entry.path()).map_err(|e| io_failure(&entry.path(), e))?;
        }
    }
    Ok(())
}

/// Derives the batch seed for a training step.
fn batch_seed(seed: u64, step: u64) -> u64 {
    seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn draw_batch(
    config: &RunConfig,
    scene: &Scene,
    grids: &Path,
    step: u64,
    n_rays: usize,
) -> Result<Vec<RaySample>, CliError> {
    let manifest = Manifest::read(grids)?;
    let loaded = load_grids(grids, &manifest)?;
    if let Some(g) = loaded.iter().find(|g| g.camera_id >= scene.cameras.len()) {
        return Err(CliError::Config(format!(
            "grid for camera {} has no matching camera in the rig",
            g.camera_id
        )));
    }
    let contexts: Vec<CameraSampling<'_>> = loaded
        .iter()
        .map(|g| CameraSampling {
            camera: &scene.cameras[g.camera_id],
            grid: &g.grid,
            tables: &g.tables,
        })
        .collect();
    let options = BatchOptions {
        s: config.s,
        ray_points: config.sampling.ray_points,
        interpolation: config.interpolation(),
        boundary: scene.boundary,
    };
    let schedule = config.mix_schedule()?;
    let mut samples = sample_batch(
        &contexts,
        &schedule,
        step,
        n_rays,
        batch_seed(config.seed, step),
        &options,
    )?;
    for s in &mut samples {
        s.camera_id = loaded[s.camera_id].camera_id;
    }
    Ok(samples)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_failure(path, e))
}

pub struct SampleArgs<'a> {
    pub grids: &'a Path,
    pub step: u64,
    pub n_rays: usize,
    pub out: Option<&'a Path>,
    pub points: Option<&'a Path>,
}

pub fn sample(config: &RunConfig, args: &SampleArgs<'_>) -> Result<(), CliError> {
    let scene = Scene::load(config, None)?;
    let samples = draw_batch(config, &scene, args.grids, args.step, args.n_rays)?;
    match args.out {
        Some(path) => write_samples_csv(create(path)?, &samples)?,
        None => write_samples_csv(std::io::stdout().lock(), &samples)?,
    }
    if let Some(path) = args.points {
        write_ray_points_csv(create(path)?, &samples)?;
    }
    let uniform = samples
        .iter()
        .filter(|s| s.source == RaySource::Uniform)
        .count();
    let background = samples.iter().filter(|s| s.is_background).count();
    eprintln!(
        "{} rays: {} guided, {uniform} uniform, {background} background",
        samples.len(),
        samples.len() - uniform
    );
    Ok(())
}

pub struct LossArgs<'a> {
    pub grids: &'a Path,
    pub step: u64,
    pub n_rays: usize,
    pub out: Option<&'a Path>,
    pub sdf: Option<&'a Path>,
}

#[derive(Serialize)]
struct LossReportJson {
    near: f64,
    empty: f64,
    background: f64,
    total: f64,
    rays: usize,
    params: LossParamsJson,
}

#[derive(Serialize)]
struct LossParamsJson {
    lambda1: f64,
    lambda2: f64,
    epsilon: f64,
    beta: f64,
    surf_weight: f64,
    s: f64,
    step: u64,
    seed: u64,
    transmittance: crate::config::Convention,
}

/// Samples a batch and evaluates the surface losses on it.
pub fn loss_eval(config: &RunConfig, args: &LossArgs<'_>) -> Result<(), CliError> {
    let scene = Scene::load(config, args.sdf)?;
    let samples = draw_batch(config, &scene, args.grids, args.step, args.n_rays)?;
    let product = config.weight_product();
    let rays: Vec<RayEvaluation> = samples
        .par_iter()
        .map(|s| RayEvaluation::from_sample(s, scene.sdf.as_ref(), config.s, product))
        .collect();
    let params = config.loss_params();
    let report = total_surface_loss(&rays, &params);
    let json = LossReportJson {
        near: report.near,
        empty: report.empty,
        background: report.background,
        total: report.total,
        rays: report.rays,
        params: LossParamsJson {
            lambda1: params.lambda1,
            lambda2: params.lambda2,
            epsilon: params.epsilon,
            beta: params.beta,
            surf_weight: config.loss.surf_weight,
            s: config.s,
            step: args.step,
            seed: config.seed,
            transmittance: config.loss.transmittance,
        },
    };
    let text = serde_json::to_string_pretty(&json).expect("report serializes") + "\n";
    match args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_failure(path, e))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub struct BenchArgs<'a> {
    pub camera: usize,
    pub repeats: usize,
    pub json: Option<&'a Path>,
}

#[derive(Serialize)]
struct BenchReport {
    camera: usize,
    scene_resolution: [usize; 3],
    camera_resolution: [usize; 3],
    entries: Vec<BenchEntry>,
    ratio_f2_f1: Option<f64>,
    ratio_f4_f2: Option<f64>,
}

/// Expected range of the F=4 over F=2 time ratio for cubic growth.
const F4_F2_RANGE: (f64, f64) = (4.0, 16.0);

/// Times camera-grid interpolation at partition factors 1, 2 and 4.
pub fn bench(config: &RunConfig, args: &BenchArgs<'_>) -> Result<(), CliError> {
    let scene = Scene::load(config, None)?;
    let cam = scene.cameras.get(args.camera).ok_or_else(|| {
        CliError::UnknownCamera(format!(
            "camera {} not in rig ({} cameras)",
            args.camera,
            scene.cameras.len()
        ))
    })?;
    let scene_grid = build_scene_grid(
        scene.sdf.as_ref(),
        &scene.boundary,
        config.grids.scene_resolution,
        config.s,
    )?;
    let bounds = compute_bounds(cam, &scene.boundary)?;
    let entries = time_interpolation(
        &scene_grid,
        cam,
        &bounds,
        config.grids.camera_resolution,
        &[1, 2, 4],
        args.repeats,
    )?;
    for e in &entries {
        println!("F={}: {:.4}s", e.factor, e.seconds);
    }
    let report = BenchReport {
        camera: args.camera,
        scene_resolution: config.grids.scene_resolution,
        camera_resolution: config.grids.camera_resolution,
        ratio_f2_f1: time_ratio(&entries, 1, 2),
        ratio_f4_f2: time_ratio(&entries, 2, 4),
        entries,
    };
    if let Some(r) = report.ratio_f2_f1 {
        println!("F=2/F=1: {r:.2}x");
    }
    if let Some(r) = report.ratio_f4_f2 {
        let ok = (F4_F2_RANGE.0..=F4_F2_RANGE.1).contains(&r);
        println!(
            "F=4/F=2: {r:.2}x ({})",
            if ok {
                "cubic growth"
            } else {
                "outside expected [4, 16]"
            }
        );
    }
    if let Some(path) = args.json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        std::fs::write(path, text).map_err(|e| io_failure(path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Heatmap,
    Csv,
}

/// Writes a camera grid as a `(u, v)` heatmap PNG or a full-cell CSV.
pub fn export(grids: &Path, kind: ExportKind, camera: usize, out: &Path) -> Result<(), CliError> {
    let manifest = Manifest::read(grids)?;
    if !manifest.cameras.contains(&camera) {
        let reason = if manifest.skipped.contains(&camera) {
            "was skipped during the build"
        } else {
            "has no grid"
        };
        return Err(CliError::UnknownCamera(format!(
            "camera {camera} {reason} in {}",
            grids.display()
        )));
    }
    let grid = load_camera_grid(grids, camera)?;
    match kind {
        ExportKind::Heatmap => write_heatmap_png(out, &grid)?,
        ExportKind::Csv => {
            let mut w = create(out)?;
            write_grid_csv(&mut w, &grid)?;
            w.flush().map_err(|e| io_failure(out, e))?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
