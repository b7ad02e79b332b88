//! Analytic signed distance fields, a Monte Carlo camera-grid oracle, and
//! the scene fixtures used to check the sampler end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Camera, CameraBounds, Intrinsics, SceneBoundary, Vec3};
use crate::scene_grid::{logistic_density, SdfField};

/// Shards used by the Monte Carlo oracle; fixed so sums are reproducible.
const ORACLE_SHARDS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnalyticSdf {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
    /// Slab of `thickness` centered on the plane `x[axis] = position`.
    Wall {
        axis: usize,
        position: f64,
        thickness: f64,
    },
    Union {
        children: Vec<AnalyticSdf>,
    },
}

impl AnalyticSdf {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        AnalyticSdf::Sphere {
            center: center.into(),
            radius,
        }
    }

    pub fn unit_sphere() -> Self {
        Self::sphere(Vec3::zeros(), 1.0)
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Self {
        AnalyticSdf::Box {
            center: center.into(),
            half_extents: half_extents.into(),
        }
    }

    pub fn wall(axis: usize, position: f64, thickness: f64) -> Self {
        AnalyticSdf::Wall {
            axis,
            position,
            thickness,
        }
    }

    pub fn union(children: Vec<AnalyticSdf>) -> Self {
        AnalyticSdf::Union { children }
    }

    /// Shape matching a scene boundary, used before any scene is known.
    pub fn from_boundary(boundary: &SceneBoundary) -> Self {
        match boundary {
            SceneBoundary::Sphere { radius } => Self::sphere(Vec3::zeros(), *radius),
            SceneBoundary::Box(b) => Self::cuboid((b.min + b.max) * 0.5, b.extent() * 0.5),
        }
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        match self {
            AnalyticSdf::Sphere { center, radius } => (x - Vec3::from(*center)).norm() - radius,
            AnalyticSdf::Box {
                center,
                half_extents,
            } => {
                let q = (x - Vec3::from(*center)).abs() - Vec3::from(*half_extents);
                let outside = q.map(|c| c.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
            AnalyticSdf::Wall {
                axis,
                position,
                thickness,
            } => (x[*axis] - position).abs() - thickness / 2.0,
            AnalyticSdf::Union { children } => children
                .iter()
                .map(|c| c.eval(x))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

impl SdfField for AnalyticSdf {
    fn distance(&self, p: &Vec3) -> f64 {
        self.eval(p)
    }
}

fn oracle_bin(x: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
    if x < lo || x > hi {
        return None;
    }
    let i = ((x - lo) / (hi - lo) * n as f64).floor() as usize;
    Some(if i >= n { n - 1 } else { i })
}

/// Monte Carlo estimate of a camera grid.
///
/// Draws `n_mc` points uniformly in `scene_box`, weights each by
/// `phi_s(S(x)) eta^-2 V / n_mc` and bins it by its projection. Uses its
/// own projection and binning code. Shard `k` of the draw uses ChaCha8
/// stream `k` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_camera_pdf(
    sdf: &dyn SdfField,
    s: f64,
    cam: &Camera,
    bounds: &CameraBounds,
    resolution: [usize; 3],
    scene_box: &Aabb,
    n_mc: usize,
    seed: u64,
) -> Vec<f64> {
    let [ru, rv, rl] = resolution;
    let cells = ru * rv * rl;
    let volume = scene_box.volume();
    let weight = volume / n_mc as f64;
    let per_shard = n_mc.div_ceil(ORACLE_SHARDS);
    let world_to_cam = cam.rotation().transpose();
    let center = *cam.center();

    let partials: Vec<Vec<f64>> = (0..ORACLE_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64);
            let mut acc = vec![0.0; cells];
            let count = per_shard.min(n_mc.saturating_sub(shard * per_shard));
            for _ in 0..count {
                let x = Vec3::new(
                    rng.random_range(scene_box.min.x..scene_box.max.x),
                    rng.random_range(scene_box.min.y..scene_box.max.y),
                    rng.random_range(scene_box.min.z..scene_box.max.z),
                );
                let c = world_to_cam * (x - center);
                if c.z <= 0.0 {
                    continue;
                }
                let (u, v, depth) = (c.x / c.z, c.y / c.z, c.z);
                let Some(iu) = oracle_bin(u, bounds.u_range.min, bounds.u_range.max, ru) else {
                    continue;
                };
                let Some(iv) = oracle_bin(v, bounds.v_range.min, bounds.v_range.max, rv) else {
                    continue;
                };
                let Some(il) =
                    oracle_bin(depth, bounds.lambda_range.min, bounds.lambda_range.max, rl)
                else {
                    continue;
                };
                acc[iu + ru * (iv + rv * il)] +=
                    logistic_density(sdf.distance(&x), s) * weight / (depth * depth);
            }
            acc
        })
        .collect();

    let mut out = vec![0.0; cells];
    for part in partials {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    out
}

/// Scales `values` to unit sum; returns zeros when the total is zero.
pub fn normalized(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Total-variation distance between two distributions given as slices.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Intrinsics of a square image whose normalized extent is `[-1, 1]`.
pub fn unit_fov_intrinsics(size: u32) -> Intrinsics {
    let half = size as f64 / 2.0;
    Intrinsics {
        fx: half,
        fy: half,
        cx: half,
        cy: half,
    }
}

/// Two equal wall slabs facing an on-axis camera.
#[derive(Debug, Clone)]
pub struct TwoWallScene {
    pub sdf: AnalyticSdf,
    pub camera: Camera,
    pub boundary: SceneBoundary,
    pub front_depth: f64,
    pub back_depth: f64,
    pub thickness: f64,
}

/// Walls perpendicular to the optical axis at depths 2 and 3 from a camera
/// at `z = -4.5`, inside a boundary sphere of radius 4.
pub fn two_wall_scene() -> TwoWallScene {
    let cam_z = -4.5;
    let (front_depth, back_depth, thickness) = (2.0, 3.0, 0.2);
    let sdf = AnalyticSdf::union(vec![
        AnalyticSdf::wall(2, cam_z + front_depth, thickness),
        AnalyticSdf::wall(2, cam_z + back_depth, thickness),
    ]);
    let camera = Camera::new(
        crate::geometry::Mat3::identity(),
        Vec3::new(0.0, 0.0, cam_z),
        unit_fov_intrinsics(64),
        64,
        64,
    )
    .expect("valid fixture camera");
    TwoWallScene {
        sdf,
        camera,
        boundary: SceneBoundary::Sphere { radius: 4.0 },
        front_depth,
        back_depth,
        thickness,
    }
}

/// Unit sphere inside the default boundary, viewed from `n` cameras spread
/// on a circle of radius 3 around the y axis.
pub fn sphere_rig(n: usize) -> Vec<Camera> {
    (0..n)
        .map(|k| {
            let angle = k as f64 / n as f64 * std::f64::consts::TAU;
            let center = Vec3::new(3.0 * angle.sin(), 0.5, -3.0 * angle.cos());
            Camera::look_at(
                center,
                Vec3::zeros(),
                Vec3::new(0.0, 1.0, 0.0),
                unit_fov_intrinsics(64),
                64,
                64,
            )
            .expect("valid fixture camera")
        })
        .collect()
}
