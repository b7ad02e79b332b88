//! Wall-clock timing of camera-grid interpolation across partition factors.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::geometry::{Camera, CameraBounds};
use crate::image_grid::interpolate_camera_grid;
use crate::scene_grid::SceneGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchEntry {
    pub factor: usize,
    pub seconds: f64,
}

/// Best-of-`repeats` interpolation time for each partition factor.
pub fn time_interpolation(
    scene: &SceneGrid,
    cam: &Camera,
    bounds: &CameraBounds,
    resolution: [usize; 3],
    factors: &[usize],
    repeats: usize,
) -> Result<Vec<BenchEntry>> {
    factors
        .iter()
        .map(|&factor| {
            let mut best = f64::INFINITY;
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                let grid = interpolate_camera_grid(scene, cam, 0, bounds, resolution, factor)?;
                best = best.min(start.elapsed().as_secs_f64());
                std::hint::black_box(grid);
            }
            Ok(BenchEntry {
                factor,
                seconds: best,
            })
        })
        .collect()
}

/// `seconds(b) / seconds(a)` for the two factors, if both were timed.
pub fn time_ratio(entries: &[BenchEntry], a: usize, b: usize) -> Option<f64> {
    let find = |f| entries.iter().find(|e| e.factor == f).map(|e| e.seconds);
    Some(find(b)? / find(a)?)
}
