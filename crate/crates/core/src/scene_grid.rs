//! Scene-space probability grid built from a signed distance field.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, SceneBoundary, Vec3};

/// Anything that can be queried for a signed distance (negative inside).
pub trait SdfField: Sync {
    fn distance(&self, p: &Vec3) -> f64;
}

impl<F> SdfField for F
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    fn distance(&self, p: &Vec3) -> f64 {
        self(p)
    }
}

/// Which closed form of the logistic density to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DensityForm {
    /// `s e^{-so} / (1 + e^{-so})^2`, the derivative of the sigmoid CDF.
    #[default]
    Derivative,
    /// `s e^{-so} / (1 + e^{-so})` without the square. Kept only for comparison runs.
    Unsquared,
}

/// Logistic density of scale `s`, the derivative of [`sigmoid_cdf`].
pub fn logistic_density(o: f64, s: f64) -> f64 {
    let e = (-(s * o).abs()).exp();
    s * e / ((1.0 + e) * (1.0 + e))
}

pub fn logistic_density_with(form: DensityForm, o: f64, s: f64) -> f64 {
    match form {
        DensityForm::Derivative => logistic_density(o, s),
        DensityForm::Unsquared => {
            let x = s * o;
            // e^{-x}/(1+e^{-x}) = 1/(1+e^{x}) = sigmoid(-x)
            s * sigmoid(-x)
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid CDF `1 / (1 + e^{-so})`.
pub fn sigmoid_cdf(o: f64, s: f64) -> f64 {
    sigmoid(s * o)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrid {
    bounds: Aabb,
    resolution: [usize; 3],
    cell_prob: Vec<f64>,
    s: f64,
}

/// A subcell of a partitioned scene cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionedCell {
    pub center: Vec3,
    pub mass: f64,
}

impl SceneGrid {
    pub fn from_values(
        bounds: Aabb,
        resolution: [usize; 3],
        cell_prob: Vec<f64>,
        s: f64,
    ) -> Result<Self> {
        if resolution.contains(&0) {
            return Err(Error::InvalidParameter(
                "scene resolution must be >= 1".into(),
            ));
        }
        if cell_prob.len() != resolution.iter().product::<usize>() {
            return Err(Error::InvalidParameter(format!(
                "expected {} cells, got {}",
                resolution.iter().product::<usize>(),
                cell_prob.len()
            )));
        }
        if cell_prob.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter(
                "cell probabilities must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            bounds,
            resolution,
            cell_prob,
            s,
        })
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn cell_prob(&self) -> &[f64] {
        &self.cell_prob
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn len(&self) -> usize {
        self.cell_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_prob.is_empty()
    }

    pub fn cell_size(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            e.x / self.resolution[0] as f64,
            e.y / self.resolution[1] as f64,
            e.z / self.resolution[2] as f64,
        )
    }

    /// Row-major index, x fastest.
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.resolution[0] * (iy + self.resolution[1] * iz)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [rx, ry, _] = self.resolution;
        [index % rx, (index / rx) % ry, index / (rx * ry)]
    }

    pub fn cell_min(&self, index: usize) -> Vec3 {
        let [ix, iy, iz] = self.coords(index);
        let size = self.cell_size();
        self.bounds.min + Vec3::new(ix as f64 * size.x, iy as f64 * size.y, iz as f64 * size.z)
    }

    pub fn cell_center(&self, index: usize) -> Vec3 {
        self.cell_min(index) + self.cell_size() * 0.5
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_prob.iter().sum()
    }

    /// The `F^3` subcells of one parent cell, x fastest.
    pub fn subcells(&self, index: usize, factor: usize) -> impl Iterator<Item = PartitionedCell> {
        let f = factor.max(1);
        let origin = self.cell_min(index);
        let step = self.cell_size() / f as f64;
        let mass = self.cell_prob[index] / (f * f * f) as f64;
        (0..f * f * f).map(move |k| {
            let (a, b, c) = (k % f, (k / f) % f, k / (f * f));
            let offset = Vec3::new(
                (a as f64 + 0.5) * step.x,
                (b as f64 + 0.5) * step.y,
                (c as f64 + 0.5) * step.z,
            );
            PartitionedCell {
                center: origin + offset,
                mass,
            }
        })
    }
}

/// Evaluates `p(x) = phi_s(S(x))` at every cell center of the boundary's box.
pub fn build_scene_grid(
    sdf: &dyn SdfField,
    boundary: &SceneBoundary,
    resolution: [usize; 3],
    s: f64,
) -> Result<SceneGrid> {
    build_scene_grid_with(sdf, boundary, resolution, s, DensityForm::Derivative)
}

pub fn build_scene_grid_with(
    sdf: &dyn SdfField,
    boundary: &SceneBoundary,
    resolution: [usize; 3],
    s: f64,
    form: DensityForm,
) -> Result<SceneGrid> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "logistic scale must be > 0, got {s}"
        )));
    }
    if resolution.contains(&0) {
        return Err(Error::InvalidParameter(
            "scene resolution must be >= 1".into(),
        ));
    }
    let mut grid = SceneGrid {
        bounds: boundary.enclosing_box(),
        resolution,
        cell_prob: vec![0.0; resolution.iter().product()],
        s,
    };
    let slice = resolution[0] * resolution[1];
    let template = grid.clone();
    grid.cell_prob
        .par_chunks_mut(slice)
        .enumerate()
        .for_each(|(iz, chunk)| {
            for (k, value) in chunk.iter_mut().enumerate() {
                let center = template.cell_center(iz * slice + k);
                *value = logistic_density_with(form, sdf.distance(&center), s);
            }
        });
    Ok(grid)
}

/// Every subcell of every cell, parents in row-major order.
pub fn partition_cells(
    grid: &SceneGrid,
    factor: usize,
) -> impl Iterator<Item = PartitionedCell> + '_ {
    (0..grid.len()).flat_map(move |i| grid.subcells(i, factor))
}
