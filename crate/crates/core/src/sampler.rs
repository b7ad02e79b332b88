//! Conditional inverse-transform sampling of image-space points, the
//! guided/uniform ray mix, and near-surface ray points.
//!
//! Sampling factorizes the view-dependent grid as
//! `p(u) * p(v | u) * p(lambda | u, v)`. Each 1-D table is a piecewise
//! constant histogram, so samples are continuous coordinates uniformly
//! placed inside the chosen cell.
//!
//! Randomness is always derived from an explicit seed. Batch operations
//! give every shard (or ray) its own ChaCha8 stream: the generator is seeded
//! with the caller's seed and `set_stream(index)` selects the shard, so
//! results do not depend on how many threads run them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, Camera, ImageSpacePoint, SceneBoundary, Vec3};
use crate::image_grid::CameraGrid;

/// Samples drawn per shard by [`sample_guided`].
pub const GUIDED_SHARD_SIZE: usize = 4096;
/// Default number of points generated around a sampled depth.
pub const DEFAULT_RAY_POINTS: usize = 32;
/// Redraw budget for non-positive Gaussian depths.
const MAX_REDRAWS: usize = 100;
const ONE_MINUS_EPSILON: f64 = 1.0 - f64::EPSILON;

/// Piecewise-constant 1-D distribution over `n` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution1D {
    pdf: Vec<f64>,
    cdf: Vec<f64>,
}

impl Distribution1D {
    /// `None` when the weights have no positive mass.
    pub fn new(weights: &[f64]) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        let pdf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(pdf.len() + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in weights {
            acc += w;
            cdf.push(acc / total);
        }
        *cdf.last_mut().expect("non-empty") = 1.0;
        Some(Self { pdf, cdf })
    }

    pub fn pdf(&self) -> &[f64] {
        &self.pdf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn len(&self) -> usize {
        self.pdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pdf.is_empty()
    }

    /// Inverts the CDF at `xi` in `[0, 1)`; returns the cell and the
    /// position inside it in `[0, 1)`.
    pub fn sample(&self, xi: f64) -> (usize, f64) {
        let n = self.pdf.len();
        let i = self.cdf[1..].partition_point(|&c| c <= xi).min(n - 1);
        let width = self.cdf[i + 1] - self.cdf[i];
        let offset = if width > 0.0 {
            ((xi - self.cdf[i]) / width).clamp(0.0, ONE_MINUS_EPSILON)
        } else {
            0.5
        };
        (i, offset)
    }
}

/// How the guided path conditions `v` on `u` and `lambda` on `(u, v)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GuidedInterpolation {
    /// Condition on the rows of the cell the previous coordinate fell in.
    /// Reproduces the grid's cell probabilities exactly.
    #[default]
    Cell,
    /// Blend the rows of the bracketing cells linearly in `u` (for `v`) and
    /// bilinearly in `(u, v)` (for `lambda`).
    Linear,
}

/// Marginal and conditional tables of a normalized camera grid.
#[derive(Debug, Clone)]
pub struct MarginalTables {
    resolution: [usize; 3],
    marginal_u: Distribution1D,
    v_given_u: Vec<Option<Distribution1D>>,
    lambda_given_uv: Vec<Option<Distribution1D>>,
}

impl MarginalTables {
    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    /// `p(u)`, normalized.
    pub fn marginal_u(&self) -> &[f64] {
        self.marginal_u.pdf()
    }

    /// `p(v | u)` for column `iu`; `None` when the column has no mass.
    pub fn v_given_u(&self, iu: usize) -> Option<&[f64]> {
        self.v_given_u[iu].as_ref().map(Distribution1D::pdf)
    }

    /// `p(lambda | u, v)`; `None` when the column has no mass.
    pub fn lambda_given_uv(&self, iu: usize, iv: usize) -> Option<&[f64]> {
        self.lambda_given_uv[iu * self.resolution[1] + iv]
            .as_ref()
            .map(Distribution1D::pdf)
    }

    fn lambda_row(&self, iu: usize, iv: usize) -> Option<&Distribution1D> {
        self.lambda_given_uv[iu * self.resolution[1] + iv].as_ref()
    }
}

/// Builds `p(u)`, `p(v | u)` and `p(lambda | u, v)` from the view-dependent grid.
pub fn build_tables(grid: &CameraGrid) -> Result<MarginalTables> {
    let [ru, rv, rl] = grid.resolution();
    let joint = grid.viewdep_prob();
    let total: f64 = joint.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateDistribution);
    }
    let at = |iu: usize, iv: usize, il: usize| joint[grid.index(iu, iv, il)];

    // p(u) = 1/(R_v R_lambda) * sum over (v, lambda)
    let inv_vl = 1.0 / (rv * rl) as f64;
    let p_u: Vec<f64> = (0..ru)
        .map(|iu| {
            let mut s = 0.0;
            for il in 0..rl {
                for iv in 0..rv {
                    s += at(iu, iv, il);
                }
            }
            s * inv_vl
        })
        .collect();
    let marginal_u = Distribution1D::new(&p_u).ok_or(Error::DegenerateDistribution)?;

    let mut v_given_u = Vec::with_capacity(ru);
    let mut lambda_given_uv = Vec::with_capacity(ru * rv);
    let inv_l = 1.0 / rl as f64;
    for (iu, &pu) in p_u.iter().enumerate() {
        if pu <= 0.0 {
            v_given_u.push(None);
            lambda_given_uv.extend((0..rv).map(|_| None));
            continue;
        }
        // p(v, lambda | u) = p(u, v, lambda) / p(u)
        let cond = |iv: usize, il: usize| at(iu, iv, il) / pu;
        // p(v | u) = 1/R_lambda * sum over lambda of p(v, lambda | u)
        let p_v: Vec<f64> = (0..rv)
            .map(|iv| (0..rl).map(|il| cond(iv, il)).sum::<f64>() * inv_l)
            .collect();
        v_given_u.push(Distribution1D::new(&p_v));
        for (iv, &pv) in p_v.iter().enumerate() {
            if pv <= 0.0 {
                lambda_given_uv.push(None);
                continue;
            }
            // p(lambda | u, v) = p(v, lambda | u) / p(v | u)
            let p_l: Vec<f64> = (0..rl).map(|il| cond(iv, il) / pv).collect();
            lambda_given_uv.push(Distribution1D::new(&p_l));
        }
    }
    Ok(MarginalTables {
        resolution: [ru, rv, rl],
        marginal_u,
        v_given_u,
        lambda_given_uv,
    })
}

/// A guided draw: continuous coordinates plus the cell they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedSample {
    pub point: ImageSpacePoint,
    pub cell: [usize; 3],
}

/// Linear interpolation weights of a position given in cell units against
/// cell centers; returns up to two `(index, weight)` pairs.
fn bracket(t: f64, n: usize) -> [(usize, f64); 2] {
    let c = t - 0.5;
    if c <= 0.0 || n == 1 {
        return [(0, 1.0), (0, 0.0)];
    }
    let last = (n - 1) as f64;
    if c >= last {
        return [(n - 1, 1.0), (n - 1, 0.0)];
    }
    let i0 = c.floor() as usize;
    let w = c - i0 as f64;
    [(i0, 1.0 - w), (i0 + 1, w)]
}

/// Weighted blend of normalized rows, ignoring undefined rows.
fn blend<'a>(
    rows: impl Iterator<Item = (Option<&'a Distribution1D>, f64)>,
    len: usize,
) -> Option<Distribution1D> {
    let mut out = vec![0.0; len];
    let mut used = 0.0;
    for (row, w) in rows {
        if w <= 0.0 {
            continue;
        }
        if let Some(d) = row {
            for (o, p) in out.iter_mut().zip(d.pdf()) {
                *o += w * p;
            }
            used += w;
        }
    }
    if used <= 0.0 {
        return None;
    }
    Distribution1D::new(&out)
}

fn draw_guided(
    tables: &MarginalTables,
    grid: &CameraGrid,
    mode: GuidedInterpolation,
    rng: &mut impl Rng,
) -> GuidedSample {
    let [ru, rv, rl] = tables.resolution;
    let (iu, ou) = tables.marginal_u.sample(rng.random());
    let tu = iu as f64 + ou;

    let (iv, ov) = match mode {
        GuidedInterpolation::Cell => tables.v_given_u[iu]
            .as_ref()
            .expect("rows of sampled columns carry mass")
            .sample(rng.random()),
        GuidedInterpolation::Linear => {
            let rows = bracket(tu, ru).map(|(i, w)| (tables.v_given_u[i].as_ref(), w));
            blend(rows.into_iter(), rv)
                .expect("own row is defined")
                .sample(rng.random())
        }
    };
    let tv = iv as f64 + ov;

    let (il, ol) = match mode {
        GuidedInterpolation::Cell => tables
            .lambda_row(iu, iv)
            .expect("rows of sampled cells carry mass")
            .sample(rng.random()),
        GuidedInterpolation::Linear => {
            let bu = bracket(tu, ru);
            let bv = bracket(tv, rv);
            let rows = bu.iter().flat_map(|&(a, wa)| {
                bv.iter()
                    .map(move |&(b, wb)| (tables.lambda_row(a, b), wa * wb))
            });
            match blend(rows, rl) {
                Some(d) => d.sample(rng.random()),
                // Linear blending in u can pick a v whose own lambda row is
                // empty while every bracketing row is too; fall back to the
                // nearest defined row in this u column.
                None => nearest_lambda_row(tables, iu, iv)
                    .expect("sampled column has mass")
                    .sample(rng.random()),
            }
        }
    };
    let tl = il as f64 + ol;

    GuidedSample {
        point: ImageSpacePoint::new(
            grid.from_grid_units(0, tu),
            grid.from_grid_units(1, tv),
            grid.from_grid_units(2, tl),
        ),
        cell: [iu, iv, il],
    }
}

fn nearest_lambda_row(tables: &MarginalTables, iu: usize, iv: usize) -> Option<&Distribution1D> {
    let rv = tables.resolution[1] as isize;
    (0..rv).find_map(|d| {
        [iv as isize - d, iv as isize + d]
            .into_iter()
            .filter(|&j| (0..rv).contains(&j))
            .find_map(|j| tables.lambda_row(iu, j as usize))
    })
}

/// Draws `n` guided image-space samples from the tables of `grid`.
pub fn sample_guided(
    tables: &MarginalTables,
    grid: &CameraGrid,
    n: usize,
    seed: u64,
    mode: GuidedInterpolation,
) -> Vec<GuidedSample> {
    let shards = n.div_ceil(GUIDED_SHARD_SIZE);
    (0..shards)
        .into_par_iter()
        .flat_map_iter(|shard| {
            let mut rng = shard_rng(seed, shard as u64);
            let count = GUIDED_SHARD_SIZE.min(n - shard * GUIDED_SHARD_SIZE);
            (0..count)
                .map(|_| draw_guided(tables, grid, mode, &mut rng))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Generator for shard `index` of a seeded batch.
pub fn shard_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthSample {
    Depth(f64),
    /// The pixel's column carries no mass.
    OutOfSurface,
}

/// Samples a depth for a given `(u, v)` from `p(lambda | u, v)` blended
/// bilinearly over the bracketing columns.
pub fn sample_depth_for_pixel(
    tables: &MarginalTables,
    grid: &CameraGrid,
    u: f64,
    v: f64,
    rng: &mut impl Rng,
) -> DepthSample {
    let [ru, rv, rl] = tables.resolution;
    let (Some(iu), Some(iv)) = (grid.bin(0, u), grid.bin(1, v)) else {
        return DepthSample::OutOfSurface;
    };
    if tables.lambda_row(iu, iv).is_none() {
        return DepthSample::OutOfSurface;
    }
    let bu = bracket(grid.to_grid_units(0, u), ru);
    let bv = bracket(grid.to_grid_units(1, v), rv);
    let rows = bu.iter().flat_map(|&(a, wa)| {
        bv.iter()
            .map(move |&(b, wb)| (tables.lambda_row(a, b), wa * wb))
    });
    let Some(dist) = blend(rows, rl) else {
        return DepthSample::OutOfSurface;
    };
    let (il, ol) = dist.sample(rng.random());
    DepthSample::Depth(grid.from_grid_units(2, il as f64 + ol))
}

/// Uniform-sampling share of rays over training.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSchedule {
    phase_fractions: Vec<f64>,
    total_steps: u64,
}

impl Default for MixSchedule {
    fn default() -> Self {
        Self {
            phase_fractions: vec![0.20, 0.40, 0.60, 0.80],
            total_steps: 500_000,
        }
    }
}

impl MixSchedule {
    pub fn new(phase_fractions: Vec<f64>, total_steps: u64) -> Result<Self> {
        if phase_fractions.is_empty() {
            return Err(Error::InvalidParameter(
                "schedule needs at least one phase".into(),
            ));
        }
        if phase_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidParameter(
                "phase fractions must lie in [0, 1]".into(),
            ));
        }
        if phase_fractions.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "phase fractions must be non-decreasing".into(),
            ));
        }
        if total_steps == 0 {
            return Err(Error::InvalidParameter("total steps must be >= 1".into()));
        }
        Ok(Self {
            phase_fractions,
            total_steps,
        })
    }

    pub fn phase_fractions(&self) -> &[f64] {
        &self.phase_fractions
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// First step of phase `phase`.
    pub fn phase_start(&self, phase: usize) -> u64 {
        let p = self.phase_fractions.len() as u128;
        ((phase as u128 * self.total_steps as u128).div_ceil(p)) as u64
    }
}

/// Fraction of rays drawn uniformly at `step` (equal-length phases).
pub fn mix_fraction(schedule: &MixSchedule, step: u64) -> f64 {
    let p = schedule.phase_fractions.len();
    let phase = (step as u128 * p as u128 / schedule.total_steps as u128) as usize;
    schedule.phase_fractions[phase.min(p - 1)]
}

/// Number of uniform rays in a batch of `batch` rays at `step`.
pub fn uniform_ray_count(schedule: &MixSchedule, step: u64, batch: usize) -> usize {
    (batch as f64 * mix_fraction(schedule, step)).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Near,
    Empty,
}

impl Band {
    pub fn as_str(&self) -> &'static str {
        match self {
            Band::Near => "near",
            Band::Empty => "empty",
        }
    }
}

/// Standard deviation of the normal approximation to the logistic density.
pub fn near_surface_sigma(s: f64) -> f64 {
    std::f64::consts::PI / (3f64.sqrt() * s)
}

/// Depths within three standard deviations of `center`.
pub fn near_band(center: f64, s: f64) -> (f64, f64) {
    let half = 3.0 * near_surface_sigma(s);
    (center - half, center + half)
}

/// Draws `n` depths from `N(center, sigma^2)` with `sigma = pi / (sqrt(3) s)`,
/// tagged by whether they fall within three sigma of `center`. Non-positive
/// draws are redrawn, up to a budget, then clamped to `min_depth`. Output is
/// sorted by depth.
pub fn sample_ray_points(
    center: f64,
    s: f64,
    n: usize,
    min_depth: f64,
    rng: &mut impl Rng,
) -> Result<Vec<(f64, Band)>> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "logistic scale must be > 0, got {s}"
        )));
    }
    let sigma = near_surface_sigma(s);
    let normal = Normal::new(center, sigma)
        .map_err(|e| Error::InvalidParameter(format!("normal distribution: {e}")))?;
    let (lo, hi) = near_band(center, s);
    let mut out: Vec<(f64, Band)> = (0..n)
        .map(|_| {
            let mut t = normal.sample(rng);
            let mut tries = 1;
            while t <= 0.0 && tries < MAX_REDRAWS {
                t = normal.sample(rng);
                tries += 1;
            }
            if t <= 0.0 {
                t = min_depth;
            }
            let band = if t >= lo && t <= hi {
                Band::Near
            } else {
                Band::Empty
            };
            (t, band)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaySource {
    Guided,
    Uniform,
}

impl RaySource {
    pub fn as_str(&self) -> &'static str {
        match self {
            RaySource::Guided => "guided",
            RaySource::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPoint {
    pub position: Vec3,
    /// Euclidean distance from the ray origin.
    pub t: f64,
    /// `None` on background rays.
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaySample {
    pub camera_id: usize,
    pub u: f64,
    pub v: f64,
    /// Sampled z-depth; `None` when the pixel is out of surface.
    pub lambda: Option<f64>,
    pub pixel: (f64, f64),
    pub origin: Vec3,
    pub direction: Vec3,
    pub source: RaySource,
    pub is_background: bool,
    pub ray_points: Vec<RayPoint>,
}

/// One camera's inputs to batch sampling.
#[derive(Debug, Clone, Copy)]
pub struct CameraSampling<'a> {
    pub camera: &'a Camera,
    pub grid: &'a CameraGrid,
    pub tables: &'a MarginalTables,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub s: f64,
    pub ray_points: usize,
    pub interpolation: GuidedInterpolation,
    pub boundary: SceneBoundary,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            s: 100.0,
            ray_points: DEFAULT_RAY_POINTS,
            interpolation: GuidedInterpolation::Cell,
            boundary: SceneBoundary::default(),
        }
    }
}

/// Samples a batch of `n_rays` rays at training `step`.
///
/// The first `n_rays - uniform_ray_count(..)` rays are guided, the rest are
/// uniform over pixel centers. Ray `r` uses stream `r` of `seed` and picks
/// its camera uniformly.
pub fn sample_batch(
    cameras: &[CameraSampling<'_>],
    schedule: &MixSchedule,
    step: u64,
    n_rays: usize,
    seed: u64,
    options: &BatchOptions,
) -> Result<Vec<RaySample>> {
    if cameras.is_empty() {
        return Err(Error::InvalidParameter("no camera grids to sample".into()));
    }
    let n_uniform = uniform_ray_count(schedule, step, n_rays);
    let n_guided = n_rays - n_uniform;
    (0..n_rays)
        .into_par_iter()
        .map(|r| {
            let mut rng = shard_rng(seed, r as u64);
            let camera_id = rng.random_range(0..cameras.len());
            let source = if r < n_guided {
                RaySource::Guided
            } else {
                RaySource::Uniform
            };
            sample_ray(&cameras[camera_id], camera_id, source, options, &mut rng)
        })
        .collect()
}

fn sample_ray(
    ctx: &CameraSampling<'_>,
    camera_id: usize,
    source: RaySource,
    options: &BatchOptions,
    rng: &mut impl Rng,
) -> Result<RaySample> {
    let cam = ctx.camera;
    let grid = ctx.grid;
    let (u, v, lambda) = match source {
        RaySource::Guided => {
            let g = draw_guided(ctx.tables, grid, options.interpolation, rng);
            (g.point.u, g.point.v, Some(g.point.lambda))
        }
        RaySource::Uniform => {
            let px = rng.random_range(0..cam.width()) as f64 + 0.5;
            let py = rng.random_range(0..cam.height()) as f64 + 0.5;
            let (u, v) = cam.pixel_to_image(px, py);
            match sample_depth_for_pixel(ctx.tables, grid, u, v, rng) {
                DepthSample::Depth(l) => (u, v, Some(l)),
                DepthSample::OutOfSurface => (u, v, None),
            }
        }
    };
    let to_ray = geometry::depth_to_ray_distance(u, v);
    let unit_depth = ImageSpacePoint::new(u, v, 1.0);
    let ray = geometry::ray_from_sample(cam, &unit_depth)?;
    let lambda_range = grid.bounds().lambda_range;

    let is_background = match lambda {
        None => true,
        Some(l) => !options.boundary.contains(&ray.at(l * to_ray)),
    };
    let ray_points = if is_background {
        // Stratified midpoints across the depth range stand in for the
        // backbone's own samples on background rays.
        let n = options.ray_points;
        (0..n)
            .map(|k| {
                let depth = lambda_range.min + (k as f64 + 0.5) / n as f64 * lambda_range.width();
                let t = depth * to_ray;
                RayPoint {
                    position: ray.at(t),
                    t,
                    band: None,
                }
            })
            .collect()
    } else {
        let center = lambda.expect("foreground rays carry a depth");
        sample_ray_points(center, options.s, options.ray_points, lambda_range.min, rng)?
            .into_iter()
            .map(|(depth, band)| {
                let t = depth * to_ray;
                RayPoint {
                    position: ray.at(t),
                    t,
                    band: Some(band),
                }
            })
            .collect()
    };
    Ok(RaySample {
        camera_id,
        u,
        v,
        lambda,
        pixel: cam.image_to_pixel(u, v),
        origin: ray.origin,
        direction: ray.direction,
        source,
        is_background,
        ray_points,
    })
}
