//! Run configuration, read from TOML.
//!
//! ```toml
//! scene = "sphere.json"
//! s = 50.0
//! seed = 7
//!
//! [grids]
//! partition_factor = 2
//! scene_resolution = [128, 128, 128]
//! camera_resolution = [64, 64, 128]
//!
//! [schedule]
//! total_steps = 500000
//! refresh_interval = 2500
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use pgs_core::image_grid::{CameraGridOptions, TransmittanceSum, ViewDependency};
use pgs_core::losses::{LossParams, TransmittanceProduct};
use pgs_core::sampler::{GuidedInterpolation, MixSchedule, DEFAULT_RAY_POINTS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    Exclusive,
    Inclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Cell,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub partition_factor: usize,
    pub scene_resolution: [usize; 3],
    pub camera_resolution: [usize; 3],
    pub view_dependency: bool,
    /// Which prior cells the transmittance sum covers.
    pub transmittance: Convention,
    pub density_scale: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            partition_factor: 2,
            scene_resolution: [128, 128, 128],
            camera_resolution: [64, 64, 128],
            view_dependency: true,
            transmittance: Convention::Exclusive,
            density_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub total_steps: u64,
    pub refresh_interval: u64,
    pub phase_fractions: Vec<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let mix = MixSchedule::default();
        Self {
            total_steps: mix.total_steps(),
            refresh_interval: 2500,
            phase_fractions: mix.phase_fractions().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub ray_points: usize,
    pub guided_interpolation: Interpolation,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            ray_points: DEFAULT_RAY_POINTS,
            guided_interpolation: Interpolation::Cell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub beta: f64,
    /// Weight of the surface loss within a full training objective.
    pub surf_weight: f64,
    /// Which opacities the weight product covers.
    pub transmittance: Convention,
}

impl Default for LossConfig {
    fn default() -> Self {
        let p = LossParams::default();
        Self {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            epsilon: p.epsilon,
            beta: p.beta,
            surf_weight: 500.0,
            transmittance: Convention::Exclusive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: PathBuf,
    /// Overrides the rig named by the scene file.
    #[serde(default)]
    pub cameras: Option<PathBuf>,
    /// Voxel SDF dump replacing the scene's analytic shapes.
    #[serde(default)]
    pub sdf: Option<PathBuf>,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub loss: LossConfig,
}

fn default_s() -> f64 {
    50.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        config.scene = dir.join(&config.scene);
        config.cameras = config.cameras.map(|p| dir.join(p));
        config.sdf = config.sdf.map(|p| dir.join(p));
        config
            .validate()
            .map_err(|msg| CliError::Config(format!("{}: {msg}", path.display())))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        let g = &self.grids;
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err("s must be positive".into());
        }
        if g.partition_factor == 0 {
            return Err("grids.partition_factor must be >= 1".into());
        }
        if g.scene_resolution.contains(&0) || g.camera_resolution.contains(&0) {
            return Err("grid resolutions must be >= 1".into());
        }
        if !(g.density_scale >= 0.0 && g.density_scale.is_finite()) {
            return Err("grids.density_scale must be non-negative".into());
        }
        if self.schedule.refresh_interval == 0 {
            return Err("schedule.refresh_interval must be >= 1".into());
        }
        self.mix_schedule().map_err(|e| format!("schedule: {e}"))?;
        if self.sampling.ray_points == 0 {
            return Err("sampling.ray_points must be >= 1".into());
        }
        let l = &self.loss;
        if [l.lambda1, l.lambda2, l.surf_weight]
            .iter()
            .any(|w| !(*w >= 0.0))
        {
            return Err("loss weights must be non-negative".into());
        }
        if !(l.epsilon >= 0.0) || !(l.beta > 0.0) {
            return Err("loss.epsilon must be >= 0 and loss.beta > 0".into());
        }
        Ok(())
    }

    pub fn mix_schedule(&self) -> pgs_core::Result<MixSchedule> {
        MixSchedule::new(
            self.schedule.phase_fractions.clone(),
            self.schedule.total_steps,
        )
    }

    pub fn grid_options(&self) -> CameraGridOptions {
        CameraGridOptions {
            resolution: self.grids.camera_resolution,
            partition_factor: self.grids.partition_factor,
            view_dependency: ViewDependency {
                enabled: self.grids.view_dependency,
                sum: match self.grids.transmittance {
                    Convention::Exclusive => TransmittanceSum::Exclusive,
                    Convention::Inclusive => TransmittanceSum::Inclusive,
                },
                density_scale: self.grids.density_scale,
            },
        }
    }

    pub fn loss_params(&self) -> LossParams {
        LossParams {
            lambda1: self.loss.lambda1,
            lambda2: self.loss.lambda2,
            epsilon: self.loss.epsilon,
            beta: self.loss.beta,
        }
    }

    pub fn weight_product(&self) -> TransmittanceProduct {
        match self.loss.transmittance {
            Convention::Exclusive => TransmittanceProduct::Exclusive,
            Convention::Inclusive => TransmittanceProduct::Inclusive,
        }
    }

    pub fn interpolation(&self) -> GuidedInterpolation {
        match self.sampling.guided_interpolation {
            Interpolation::Cell => GuidedInterpolation::Cell,
            Interpolation::Linear => GuidedInterpolation::Linear,
        }
    }
}
