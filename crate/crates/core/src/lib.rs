//! Probability-guided ray sampling for neural implicit surface rendering.
//!
//! The pipeline turns a signed distance field into a scene-space density
//! ([`scene_grid`]), projects it into per-camera `(u, v, depth)` grids with
//! occlusion-aware weighting ([`image_grid`]), samples pixels and depths
//! from those grids ([`sampler`]) and scores near-surface ray points
//! ([`losses`]). [`testbed`] provides analytic scenes and oracles.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod geometry;
pub mod image_grid;
pub mod io;
pub mod losses;
pub mod sampler;
pub mod scene_grid;
pub mod testbed;

pub use error::{Error, Result};
pub use geometry::{Camera, CameraBounds, ImageSpacePoint, Intrinsics, SceneBoundary, Vec3};
pub use image_grid::{CameraGrid, CameraGridOptions, TransmittanceSum, ViewDependency};
pub use losses::{LossParams, RayEvaluation, SurfaceLossReport};
pub use sampler::{GuidedInterpolation, MarginalTables, MixSchedule, RaySample};
pub use scene_grid::{SceneGrid, SdfField};
pub use testbed::AnalyticSdf;
