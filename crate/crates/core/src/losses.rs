//! Volume-rendering weights and the near-surface, empty-space and
//! background losses. Values only; nothing here differentiates.

use serde::Serialize;

use crate::sampler::{Band, RaySample};
use crate::scene_grid::{sigmoid_cdf, SdfField};

/// Discrete opacities between consecutive ray points, clamped to `[0, 1]`.
pub fn compute_alphas(sdf_values: &[f64], s: f64) -> Vec<f64> {
    sdf_values
        .windows(2)
        .map(|w| {
            let a = sigmoid_cdf(w[0], s);
            let b = sigmoid_cdf(w[1], s);
            if a <= 0.0 {
                return 0.0;
            }
            ((a - b) / a).clamp(0.0, 1.0)
        })
        .collect()
}

/// Which opacities the transmittance product in front of a point covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TransmittanceProduct {
    /// `prod_{j < i} (1 - alpha_j)`.
    #[default]
    Exclusive,
    /// `prod_{j <= i} (1 - alpha_j)`.
    Inclusive,
}

pub fn compute_weights(alphas: &[f64]) -> Vec<f64> {
    compute_weights_with(alphas, TransmittanceProduct::Exclusive)
}

pub fn compute_weights_with(alphas: &[f64], product: TransmittanceProduct) -> Vec<f64> {
    let mut transmittance = 1.0;
    alphas
        .iter()
        .map(|&a| {
            let w = match product {
                TransmittanceProduct::Exclusive => a * transmittance,
                TransmittanceProduct::Inclusive => a * transmittance * (1.0 - a),
            };
            transmittance *= 1.0 - a;
            w
        })
        .collect()
}

/// Transmittance left after all opacities, `prod (1 - alpha_j)`.
pub fn residual_transmittance(alphas: &[f64]) -> f64 {
    alphas.iter().map(|a| 1.0 - a).product()
}

/// SDF values and rendering weights of one ray's points.
#[derive(Debug, Clone, PartialEq)]
pub struct RayEvaluation {
    pub sdf_values: Vec<f64>,
    pub weights: Vec<f64>,
    pub bands: Vec<Option<Band>>,
    pub is_background: bool,
}

impl RayEvaluation {
    /// Evaluates `sdf` at the ray's points. The last point has no interval
    /// behind it and receives weight zero.
    pub fn from_sample(
        sample: &RaySample,
        sdf: &dyn SdfField,
        s: f64,
        product: TransmittanceProduct,
    ) -> Self {
        let sdf_values: Vec<f64> = sample
            .ray_points
            .iter()
            .map(|p| sdf.distance(&p.position))
            .collect();
        let mut weights = compute_weights_with(&compute_alphas(&sdf_values, s), product);
        weights.resize(sdf_values.len(), 0.0);
        Self {
            sdf_values,
            weights,
            bands: sample.ray_points.iter().map(|p| p.band).collect(),
            is_background: sample.is_background,
        }
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64, Option<Band>)> + '_ {
        self.sdf_values
            .iter()
            .zip(&self.weights)
            .zip(&self.bands)
            .map(|((&s, &w), &b)| (s, w, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub beta: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 0.5,
            epsilon: 1e-3,
            beta: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceLossReport {
    pub near: f64,
    pub empty: f64,
    pub background: f64,
    pub total: f64,
    pub rays: usize,
}

fn mean_over_rays(rays: &[RayEvaluation], per_ray: impl Fn(&RayEvaluation) -> f64) -> f64 {
    if rays.is_empty() {
        return 0.0;
    }
    rays.iter().map(per_ray).sum::<f64>() / rays.len() as f64
}

/// Mean over rays of `sum |S| w` across near-band points.
pub fn near_surface_loss(rays: &[RayEvaluation]) -> f64 {
    mean_over_rays(rays, |r| {
        if r.is_background {
            return 0.0;
        }
        r.points()
            .filter(|p| p.2 == Some(Band::Near))
            .map(|(s, w, _)| s.abs() * w)
            .sum()
    })
}

/// Mean over rays of `sum ((S - epsilon) w)^2` across empty-space points.
pub fn empty_space_loss(rays: &[RayEvaluation], epsilon: f64) -> f64 {
    mean_over_rays(rays, |r| {
        if r.is_background {
            return 0.0;
        }
        r.points()
            .filter(|p| p.2 == Some(Band::Empty))
            .map(|(s, w, _)| ((s - epsilon) * w).powi(2))
            .sum()
    })
}

/// Mean over rays of `sum exp(-beta |S|) w` across background rays' points.
pub fn background_loss(rays: &[RayEvaluation], beta: f64) -> f64 {
    mean_over_rays(rays, |r| {
        if !r.is_background {
            return 0.0;
        }
        r.points()
            .map(|(s, w, _)| (-beta * s.abs()).exp() * w)
            .sum()
    })
}

pub fn total_surface_loss(rays: &[RayEvaluation], params: &LossParams) -> SurfaceLossReport {
    let near = near_surface_loss(rays);
    let empty = empty_space_loss(rays, params.epsilon);
    let background = background_loss(rays, params.beta);
    SurfaceLossReport {
        near,
        empty,
        background,
        total: params.lambda1 * near + params.lambda2 * (empty + background),
        rays: rays.len(),
    }
}
