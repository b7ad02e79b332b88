//! CSV and PNG exports of camera grids and sampled rays.

use std::io::Write;
use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::image_grid::CameraGrid;
use crate::sampler::RaySample;

pub const SAMPLE_HEADER: [&str; 13] = [
    "camera_id",
    "source",
    "u",
    "v",
    "lambda",
    "px",
    "py",
    "ox",
    "oy",
    "oz",
    "dx",
    "dy",
    "dz",
];
pub const RAY_POINT_HEADER: [&str; 3] = ["ray", "t", "band"];
pub const GRID_HEADER: [&str; 4] = ["u_idx", "v_idx", "lambda_idx", "p"];

/// One row per ray. `lambda` is empty for out-of-surface rays.
pub fn write_samples_csv<W: Write>(out: W, samples: &[RaySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SAMPLE_HEADER)?;
    for s in samples {
        let lambda = s.lambda.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([
            s.camera_id.to_string(),
            s.source.as_str().to_string(),
            s.u.to_string(),
            s.v.to_string(),
            lambda,
            s.pixel.0.to_string(),
            s.pixel.1.to_string(),
            s.origin.x.to_string(),
            s.origin.y.to_string(),
            s.origin.z.to_string(),
            s.direction.x.to_string(),
            s.direction.y.to_string(),
            s.direction.z.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ray points keyed by ray index; background points carry band `bg`.
pub fn write_ray_points_csv<W: Write>(out: W, samples: &[RaySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAY_POINT_HEADER)?;
    for (ray, s) in samples.iter().enumerate() {
        for p in &s.ray_points {
            let band = p.band.map_or("bg", |b| b.as_str());
            w.write_record([ray.to_string(), p.t.to_string(), band.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Every cell of the view-dependent grid, u fastest.
pub fn write_grid_csv<W: Write>(out: W, grid: &CameraGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_HEADER)?;
    for (i, p) in grid.viewdep_prob().iter().enumerate() {
        let [iu, iv, il] = grid.coords(i);
        w.write_record([
            iu.to_string(),
            iv.to_string(),
            il.to_string(),
            p.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Linear grayscale image of the lambda-summed grid; image row 0 holds the
/// smallest `v`.
pub fn heatmap_image(grid: &CameraGrid) -> GrayImage {
    let [ru, rv, _] = grid.resolution();
    let marginal = grid.uv_marginal();
    let max = marginal.iter().cloned().fold(0.0, f64::max);
    GrayImage::from_fn(ru as u32, rv as u32, |x, y| {
        let p = marginal[x as usize + ru * y as usize];
        let level = if max > 0.0 {
            (p / max * 255.0).round()
        } else {
            0.0
        };
        Luma([level as u8])
    })
}

pub fn write_heatmap_png(path: &Path, grid: &CameraGrid) -> Result<()> {
    heatmap_image(grid)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })
}
