//! Loading scene inputs and the grid directory written by `grids build`.

use std::path::{Path, PathBuf};

use pgs_core::geometry::{Camera, SceneBoundary};
use pgs_core::image_grid::{normalize, CameraGrid};
use pgs_core::io::{load_rig, GridDump, SceneDescription};
use pgs_core::sampler::{build_tables, MarginalTables};
use pgs_core::SdfField;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const SCENE_DUMP: &str = "scene.psgd";

pub fn camera_dump_name(id: usize) -> String {
    format!("camera_{id:03}.psgd")
}

/// Describes the contents of a grid directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Refresh window the grids were built for.
    pub epoch: u64,
    pub refresh_interval: u64,
    pub s: f64,
    pub partition_factor: usize,
    pub view_dependency: bool,
    /// Cameras with a grid on disk.
    pub cameras: Vec<usize>,
    /// Cameras whose frustum received no mass.
    pub skipped: Vec<usize>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CliError::MissingArtifact(format!(
                "no grids found in {} (missing {MANIFEST}); run `pgs grids build` first",
                dir.display()
            ))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::MissingArtifact(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))
    }

    /// Whether every file the manifest names is present.
    pub fn complete(&self, dir: &Path) -> bool {
        dir.join(SCENE_DUMP).is_file()
            && self
                .cameras
                .iter()
                .all(|&id| dir.join(camera_dump_name(id)).is_file())
    }
}

pub fn io_failure(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(pgs_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Everything a command needs from the scene description.
pub struct Scene {
    pub boundary: SceneBoundary,
    pub sdf: Box<dyn SdfField>,
    pub cameras: Vec<Camera>,
}

impl Scene {
    /// Reads the scene file, its rig and, when configured, a voxel SDF.
    pub fn load(config: &RunConfig, sdf_override: Option<&Path>) -> Result<Self, CliError> {
        let config_err = |e: pgs_core::Error| CliError::Config(e.to_string());
        let desc = SceneDescription::load(&config.scene).map_err(config_err)?;
        let boundary = desc
            .boundary
            .to_boundary()
            .map_err(|e| CliError::Config(format!("{}: {e}", config.scene.display())))?;
        let rig: PathBuf = config
            .cameras
            .clone()
            .or_else(|| desc.cameras.clone())
            .ok_or_else(|| {
                CliError::Config(format!(
                    "{}: no camera rig given in the scene or the config",
                    config.scene.display()
                ))
            })?;
        let cameras = load_rig(&rig).map_err(config_err)?;
        if cameras.is_empty() {
            return Err(CliError::Config(format!(
                "{}: rig has no cameras",
                rig.display()
            )));
        }
        let sdf: Box<dyn SdfField> = match sdf_override.or(config.sdf.as_deref()) {
            Some(path) => {
                let dump = GridDump::read(path).map_err(config_err)?;
                Box::new(
                    dump.to_voxel_sdf()
                        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
                )
            }
            None => Box::new(desc.sdf().map_err(config_err)?),
        };
        Ok(Self {
            boundary,
            sdf,
            cameras,
        })
    }
}

/// A camera grid read back from disk, ready for sampling.
pub struct LoadedGrid {
    pub camera_id: usize,
    pub grid: CameraGrid,
    pub tables: MarginalTables,
}

pub fn load_camera_grid(dir: &Path, camera_id: usize) -> Result<CameraGrid, CliError> {
    let path = dir.join(camera_dump_name(camera_id));
    if !path.is_file() {
        return Err(CliError::MissingArtifact(format!(
            "{} is missing; rebuild the grids",
            path.display()
        )));
    }
    let dump = GridDump::read(&path)?;
    Ok(dump.to_camera_grid(camera_id)?)
}

/// Reads every camera grid listed in the manifest.
pub fn load_grids(dir: &Path, manifest: &Manifest) -> Result<Vec<LoadedGrid>, CliError> {
    if manifest.cameras.is_empty() {
        return Err(CliError::MissingArtifact(format!(
            "{} holds no camera grids",
            dir.display()
        )));
    }
    manifest
        .cameras
        .iter()
        .map(|&id| {
            let grid = normalize(load_camera_grid(dir, id)?)?;
            let tables = build_tables(&grid)?;
            Ok(LoadedGrid {
                camera_id: id,
                grid,
                tables,
            })
        })
        .collect()
}
