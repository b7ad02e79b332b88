//! Per-camera probability grids over the image space `(u, v, lambda)`.
//!
//! A scene grid is partitioned into `F^3` subcells per cell, each subcell
//! center is projected into the camera, and its mass times `eta^-2`
//! (`eta` being the projected z-depth) is accumulated into the image-space
//! cell it lands in. Transmittance along each `(u, v)` column then turns
//! the raw grid into a view-dependent one.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, Camera, CameraBounds, Interval, SceneBoundary};
use crate::scene_grid::SceneGrid;

/// Number of partial accumulators used while projecting a scene grid.
/// Fixed so the floating-point reduction order never depends on thread count.
const ACCUMULATION_CHUNKS: usize = 8;

/// How far prior cells of a column reach when computing transmittance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TransmittanceSum {
    /// Cells strictly in front of the current one.
    #[default]
    Exclusive,
    /// Cells in front of and including the current one.
    Inclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewDependency {
    pub enabled: bool,
    pub sum: TransmittanceSum,
    /// Multiplies raw grid values before they are used as optical density.
    pub density_scale: f64,
}

impl Default for ViewDependency {
    fn default() -> Self {
        Self {
            enabled: true,
            sum: TransmittanceSum::Exclusive,
            density_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraGridOptions {
    /// `(R_u, R_v, R_lambda)`.
    pub resolution: [usize; 3],
    pub partition_factor: usize,
    pub view_dependency: ViewDependency,
}

impl Default for CameraGridOptions {
    fn default() -> Self {
        Self {
            resolution: [64, 64, 128],
            partition_factor: 2,
            view_dependency: ViewDependency::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraGrid {
    camera_id: usize,
    bounds: CameraBounds,
    resolution: [usize; 3],
    raw_prob: Vec<f64>,
    viewdep_prob: Vec<f64>,
    normalized: bool,
}

impl CameraGrid {
    /// A grid holding only a final sampling distribution, e.g. one read back
    /// from a dump. `raw_prob` is left empty.
    pub fn from_distribution(
        camera_id: usize,
        bounds: CameraBounds,
        resolution: [usize; 3],
        prob: Vec<f64>,
    ) -> Result<Self> {
        check_resolution(resolution)?;
        if prob.len() != resolution.iter().product::<usize>() {
            return Err(Error::InvalidParameter(format!(
                "expected {} cells, got {}",
                resolution.iter().product::<usize>(),
                prob.len()
            )));
        }
        if prob.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter(
                "grid values must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            camera_id,
            bounds,
            resolution,
            raw_prob: Vec::new(),
            viewdep_prob: prob,
            normalized: false,
        })
    }

    /// A grid from explicit raw values, before view dependency.
    pub fn from_raw(
        camera_id: usize,
        bounds: CameraBounds,
        resolution: [usize; 3],
        raw: Vec<f64>,
    ) -> Result<Self> {
        let mut grid = Self::from_distribution(camera_id, bounds, resolution, raw)?;
        grid.raw_prob = std::mem::take(&mut grid.viewdep_prob);
        grid.viewdep_prob = vec![0.0; grid.raw_prob.len()];
        Ok(grid)
    }

    pub fn camera_id(&self) -> usize {
        self.camera_id
    }

    pub fn bounds(&self) -> &CameraBounds {
        &self.bounds
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn raw_prob(&self) -> &[f64] {
        &self.raw_prob
    }

    pub fn viewdep_prob(&self) -> &[f64] {
        &self.viewdep_prob
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index, u fastest.
    pub fn index(&self, iu: usize, iv: usize, il: usize) -> usize {
        iu + self.resolution[0] * (iv + self.resolution[1] * il)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [ru, rv, _] = self.resolution;
        [index % ru, (index / ru) % rv, index / (ru * rv)]
    }

    fn axis(&self, axis: usize) -> &Interval {
        match axis {
            0 => &self.bounds.u_range,
            1 => &self.bounds.v_range,
            _ => &self.bounds.lambda_range,
        }
    }

    /// Coordinate extent of cell `i` along `axis` (0 = u, 1 = v, 2 = lambda).
    pub fn cell_extent(&self, axis: usize, i: usize) -> Interval {
        let range = self.axis(axis);
        let n = self.resolution[axis] as f64;
        let step = range.width() / n;
        Interval::new(
            range.min + i as f64 * step,
            range.min + (i + 1) as f64 * step,
        )
    }

    /// Continuous coordinate to cell index; half-open cells, last one closed.
    pub fn bin(&self, axis: usize, x: f64) -> Option<usize> {
        bin_coordinate(x, self.axis(axis), self.resolution[axis])
    }

    /// Fractional cell position in `[0, R]` along `axis`.
    pub fn to_grid_units(&self, axis: usize, x: f64) -> f64 {
        let range = self.axis(axis);
        (x - range.min) / range.width() * self.resolution[axis] as f64
    }

    pub fn from_grid_units(&self, axis: usize, t: f64) -> f64 {
        let range = self.axis(axis);
        range.min + t / self.resolution[axis] as f64 * range.width()
    }

    /// View-dependent probability summed over lambda, indexed `iu + R_u * iv`.
    pub fn uv_marginal(&self) -> Vec<f64> {
        let plane = self.resolution[0] * self.resolution[1];
        let mut out = vec![0.0; plane];
        for (i, p) in self.viewdep_prob.iter().enumerate() {
            out[i % plane] += p;
        }
        out
    }
}

fn check_resolution(resolution: [usize; 3]) -> Result<()> {
    if resolution.contains(&0) {
        return Err(Error::InvalidParameter(
            "camera resolution must be >= 1".into(),
        ));
    }
    Ok(())
}

fn bin_coordinate(x: f64, range: &Interval, n: usize) -> Option<usize> {
    if !(x >= range.min && x <= range.max) {
        return None;
    }
    let t = (x - range.min) / range.width() * n as f64;
    Some((t as usize).min(n - 1))
}

/// Projects the partitioned scene grid into the camera's image space.
///
/// Subcells behind the camera or outside `bounds` are dropped. Returns
/// [`Error::EmptyGrid`] when nothing lands inside the frustum.
pub fn interpolate_camera_grid(
    scene: &SceneGrid,
    cam: &Camera,
    camera_id: usize,
    bounds: &CameraBounds,
    resolution: [usize; 3],
    partition_factor: usize,
) -> Result<CameraGrid> {
    check_resolution(resolution)?;
    if partition_factor == 0 {
        return Err(Error::InvalidParameter(
            "partition factor must be >= 1".into(),
        ));
    }
    if !(bounds.lambda_range.min > 0.0 && bounds.lambda_range.min < bounds.lambda_range.max) {
        return Err(Error::InvalidParameter("invalid depth range".into()));
    }
    let cells = resolution.iter().product::<usize>();
    let mut grid = CameraGrid {
        camera_id,
        bounds: *bounds,
        resolution,
        raw_prob: Vec::new(),
        viewdep_prob: vec![0.0; cells],
        normalized: false,
    };

    let parents = scene.len();
    let per_chunk = parents.div_ceil(ACCUMULATION_CHUNKS);
    let partials: Vec<(Vec<f64>, bool)> = (0..ACCUMULATION_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![0.0; cells];
            let mut hit = false;
            let start = chunk * per_chunk;
            let end = ((chunk + 1) * per_chunk).min(parents);
            for parent in start..end {
                if scene.cell_prob()[parent] == 0.0 {
                    continue;
                }
                for sub in scene.subcells(parent, partition_factor) {
                    let Ok(p) = geometry::project(cam, &sub.center) else {
                        continue;
                    };
                    let (Some(iu), Some(iv), Some(il)) =
                        (grid.bin(0, p.u), grid.bin(1, p.v), grid.bin(2, p.lambda))
                    else {
                        continue;
                    };
                    acc[grid.index(iu, iv, il)] += sub.mass / (p.lambda * p.lambda);
                    hit = true;
                }
            }
            (acc, hit)
        })
        .collect();

    let mut raw = vec![0.0; cells];
    let mut any = false;
    for (acc, hit) in partials {
        if !hit {
            continue;
        }
        any = true;
        for (r, a) in raw.iter_mut().zip(acc) {
            *r += a;
        }
    }
    if !any || raw.iter().all(|&r| r == 0.0) {
        return Err(Error::EmptyGrid);
    }
    grid.raw_prob = raw;
    Ok(grid)
}

/// Weights every cell by the transmittance of the cells in front of it
/// along its `(u, v)` column.
pub fn apply_view_dependency(mut grid: CameraGrid, options: &ViewDependency) -> CameraGrid {
    let [ru, rv, rl] = grid.resolution;
    if grid.raw_prob.len() != grid.len() {
        return grid;
    }
    if !options.enabled {
        grid.viewdep_prob.clone_from(&grid.raw_prob);
        grid.normalized = false;
        return grid;
    }
    let plane = ru * rv;
    let mut out = vec![0.0; grid.len()];
    for column in 0..plane {
        let mut prefix = 0.0;
        for il in 0..rl {
            let idx = column + plane * il;
            let raw = grid.raw_prob[idx];
            if options.sum == TransmittanceSum::Inclusive {
                prefix += raw;
            }
            out[idx] = raw * (-options.density_scale * prefix).exp();
            if options.sum == TransmittanceSum::Exclusive {
                prefix += raw;
            }
        }
    }
    grid.viewdep_prob = out;
    grid.normalized = false;
    grid
}

/// Scales the view-dependent grid to unit total mass.
pub fn normalize(mut grid: CameraGrid) -> Result<CameraGrid> {
    let total: f64 = grid.viewdep_prob.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateDistribution);
    }
    for p in &mut grid.viewdep_prob {
        *p /= total;
    }
    grid.normalized = true;
    Ok(grid)
}

/// Bounds, projection, view dependency and normalization for one camera.
pub fn build_camera_grid(
    scene: &SceneGrid,
    cam: &Camera,
    camera_id: usize,
    boundary: &SceneBoundary,
    options: &CameraGridOptions,
) -> Result<CameraGrid> {
    let bounds = geometry::compute_bounds(cam, boundary)?;
    let raw = interpolate_camera_grid(
        scene,
        cam,
        camera_id,
        &bounds,
        options.resolution,
        options.partition_factor,
    )?;
    normalize(apply_view_dependency(raw, &options.view_dependency))
}

/// Builds grids for several cameras in parallel; results keep camera order.
pub fn build_camera_grids(
    scene: &SceneGrid,
    cameras: &[Camera],
    boundary: &SceneBoundary,
    options: &CameraGridOptions,
) -> Vec<Result<CameraGrid>> {
    cameras
        .par_iter()
        .enumerate()
        .map(|(id, cam)| build_camera_grid(scene, cam, id, boundary, options))
        .collect()
}

/// Tracks which refresh window a training step falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshSchedule {
    interval: u64,
}

impl RefreshSchedule {
    pub fn new(interval: u64) -> Result<Self> {
        if interval == 0 {
            return Err(Error::InvalidParameter(
                "refresh interval must be >= 1".into(),
            ));
        }
        Ok(Self { interval })
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn epoch(&self, step: u64) -> u64 {
        step / self.interval
    }
}

/// Holds grids built for the current refresh window and rebuilds them once
/// a step crosses into the next window.
#[derive(Debug)]
pub struct GridCache<T> {
    schedule: RefreshSchedule,
    current: Option<(u64, T)>,
}

impl<T> GridCache<T> {
    pub fn new(schedule: RefreshSchedule) -> Self {
        Self {
            schedule,
            current: None,
        }
    }

    /// Returns the cached value, rebuilding it with `build(epoch)` when
    /// `step` belongs to a different window than the cached one.
    pub fn get<E>(
        &mut self,
        step: u64,
        build: impl FnOnce(u64) -> std::result::Result<T, E>,
    ) -> std::result::Result<&T, E> {
        let epoch = self.schedule.epoch(step);
        let stale = !matches!(self.current, Some((e, _)) if e == epoch);
        if stale {
            self.current = Some((epoch, build(epoch)?));
        }
        Ok(&self.current.as_ref().expect("populated above").1)
    }

    pub fn epoch(&self) -> Option<u64> {
        self.current.as_ref().map(|(e, _)| *e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Intrinsics, Mat3, Vec3};
    use crate::scene_grid::build_scene_grid;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera_at(z: f64) -> Camera {
        let k = Intrinsics {
            fx: 32.0,
            fy: 32.0,
            cx: 32.0,
            cy: 32.0,
        };
        Camera::new(Mat3::identity(), Vec3::new(0.0, 0.0, z), k, 64, 64).unwrap()
    }

    fn column_bounds(lambda: Interval) -> CameraBounds {
        CameraBounds {
            u_range: Interval::new(-1.0, 1.0),
            v_range: Interval::new(-1.0, 1.0),
            lambda_range: lambda,
        }
    }

    fn raw_column(values: &[f64]) -> CameraGrid {
        let bounds = column_bounds(Interval::new(1.0, 1.0 + values.len() as f64));
        CameraGrid::from_raw(0, bounds, [1, 1, values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn single_cell_mass_scales_by_inverse_depth_squared() {
        // One occupied scene cell of side 0.02 centered on the optical axis
        // at depth 2; all of its subcells land in one image cell.
        let m = 0.6;
        let bounds = Aabb::new(Vec3::new(-0.01, -0.01, -0.01), Vec3::new(0.01, 0.01, 0.01));
        let scene = SceneGrid::from_values(bounds, [1, 1, 1], vec![m], 1.0).unwrap();
        let cam = camera_at(-2.0);
        let cb = column_bounds(Interval::new(1.0, 3.0));
        let grid = interpolate_camera_grid(&scene, &cam, 0, &cb, [1, 1, 1], 2).unwrap();
        let got = grid.raw_prob()[0];
        assert!((got - m / 4.0).abs() < 0.01 * m / 4.0, "{got}");

        // Exact value from the eight subcell depths 1.995 and 2.005.
        let expected = m / 2.0 * (1.0 / (1.995f64 * 1.995) + 1.0 / (2.005f64 * 2.005));
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn scene_outside_frustum_is_empty() {
        let bounds = Aabb::new(Vec3::new(-1.0, -1.0, -10.0), Vec3::new(1.0, 1.0, -8.0));
        let scene = SceneGrid::from_values(bounds, [2, 2, 2], vec![1.0; 8], 1.0).unwrap();
        let cam = camera_at(0.0);
        let cb = column_bounds(Interval::new(1.0, 3.0));
        assert!(matches!(
            interpolate_camera_grid(&scene, &cam, 0, &cb, [4, 4, 4], 2),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn accumulated_mass_matches_flat_oracle() {
        let sphere = |p: &Vec3| p.norm() - 0.7;
        let boundary = SceneBoundary::Sphere { radius: 1.0 };
        let scene = build_scene_grid(&sphere, &boundary, [20, 20, 20], 10.0).unwrap();
        let cam = Camera::look_at(
            Vec3::new(0.5, 0.3, -2.5),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            Intrinsics {
                fx: 20.0,
                fy: 20.0,
                cx: 16.0,
                cy: 16.0,
            },
            32,
            32,
        )
        .unwrap();
        let cb = geometry::compute_bounds(&cam, &boundary).unwrap();
        let grid = interpolate_camera_grid(&scene, &cam, 0, &cb, [8, 8, 16], 2).unwrap();

        // Flat-list oracle: one pass, own frustum test, no binning helpers.
        let mut expected = 0.0;
        for i in 0..scene.len() {
            for sub in scene.subcells(i, 2) {
                let x = cam.rotation().transpose() * (sub.center - cam.center());
                if x.z <= 0.0 {
                    continue;
                }
                let (u, v) = (x.x / x.z, x.y / x.z);
                if cb.u_range.contains(u) && cb.v_range.contains(v) && cb.lambda_range.contains(x.z)
                {
                    expected += sub.mass / (x.z * x.z);
                }
            }
        }
        let total: f64 = grid.raw_prob().iter().sum();
        assert!((total - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn interpolation_is_deterministic_across_thread_counts() {
        let sphere = |p: &Vec3| p.norm() - 0.7;
        let boundary = SceneBoundary::Sphere { radius: 1.0 };
        let scene = build_scene_grid(&sphere, &boundary, [24, 24, 24], 20.0).unwrap();
        let cam = camera_at(-3.0);
        let cb = geometry::compute_bounds(&cam, &boundary).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| interpolate_camera_grid(&scene, &cam, 0, &cb, [16, 16, 16], 2).unwrap())
        };
        let a = run(1);
        let b = run(4);
        let bits = |g: &CameraGrid| g.raw_prob().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn exclusive_transmittance_column() {
        let mut raw = vec![0.0; 6];
        raw[0] = 0.9;
        raw[2] = 0.9;
        let g = apply_view_dependency(raw_column(&raw), &ViewDependency::default());
        let vd = g.viewdep_prob();
        assert_eq!(vd[0], 0.9);
        assert_eq!(vd[1], 0.0);
        assert_relative_eq!(vd[2], 0.9 * (-0.9f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(vd[2], 0.365_912_693_766_539, epsilon = 1e-12);
        assert!(vd[3..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_and_single_columns() {
        let g = apply_view_dependency(raw_column(&[0.0; 5]), &ViewDependency::default());
        assert!(g.viewdep_prob().iter().all(|&x| x == 0.0));
        let mut raw = vec![0.0; 5];
        raw[3] = 1.7;
        let g = apply_view_dependency(raw_column(&raw), &ViewDependency::default());
        assert_eq!(g.viewdep_prob()[3], 1.7);
    }

    #[test]
    fn inclusive_sum_self_attenuates() {
        let opts = ViewDependency {
            sum: TransmittanceSum::Inclusive,
            ..ViewDependency::default()
        };
        let g = apply_view_dependency(raw_column(&[0.5, 0.0]), &opts);
        assert_relative_eq!(g.viewdep_prob()[0], 0.5 * (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn density_scale_sharpens_occlusion() {
        let opts = ViewDependency {
            density_scale: 2.0,
            ..ViewDependency::default()
        };
        let g = apply_view_dependency(raw_column(&[0.5, 0.5]), &opts);
        assert_relative_eq!(g.viewdep_prob()[1], 0.5 * (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn occluded_cell_attenuated_by_front_mass() {
        let mut raw = vec![0.0; 8];
        raw[1] = 0.37;
        raw[5] = 0.37;
        let g = apply_view_dependency(raw_column(&raw), &ViewDependency::default());
        let ratio = g.viewdep_prob()[5] / g.viewdep_prob()[1];
        assert!((ratio - (-0.37f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn disabled_view_dependency_copies_raw() {
        let opts = ViewDependency {
            enabled: false,
            ..ViewDependency::default()
        };
        let g = apply_view_dependency(raw_column(&[0.5, 0.7]), &opts);
        assert_eq!(g.viewdep_prob(), &[0.5, 0.7]);
    }

    #[test]
    fn transmittance_never_exceeds_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..4 * 4 * 8).map(|_| rng.random::<f64>()).collect();
        let bounds = column_bounds(Interval::new(1.0, 2.0));
        let g = CameraGrid::from_raw(0, bounds, [4, 4, 8], raw).unwrap();
        let g = apply_view_dependency(g, &ViewDependency::default());
        for (v, r) in g.viewdep_prob().iter().zip(g.raw_prob()) {
            assert!(v <= r);
        }
        // Transmittance factor is non-increasing along each column.
        for col in 0..16 {
            let mut last = 1.0;
            for il in 0..8 {
                let i = col + 16 * il;
                if g.raw_prob()[i] > 0.0 {
                    let t = g.viewdep_prob()[i] / g.raw_prob()[i];
                    assert!(t <= last + 1e-15);
                    last = t;
                }
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let bounds = column_bounds(Interval::new(1.0, 2.0));
        let g = CameraGrid::from_distribution(0, bounds, [2, 1, 1], vec![2.0, 2.0]).unwrap();
        let g = normalize(g).unwrap();
        assert_eq!(g.viewdep_prob(), &[0.5, 0.5]);
        assert!(g.is_normalized());
        let z = CameraGrid::from_distribution(0, bounds, [2, 1, 1], vec![0.0, 0.0]).unwrap();
        assert!(matches!(normalize(z), Err(Error::DegenerateDistribution)));
    }

    #[test]
    fn normalize_preserves_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 10.0).collect();
        let bounds = column_bounds(Interval::new(1.0, 2.0));
        let g = CameraGrid::from_distribution(0, bounds, [4, 4, 4], values.clone()).unwrap();
        let g = normalize(g).unwrap();
        let sum: f64 = g.viewdep_prob().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for i in 0..64 {
            for j in 0..64 {
                let before = values[i] / values[j];
                let after = g.viewdep_prob()[i] / g.viewdep_prob()[j];
                assert!((before - after).abs() <= 1e-12 * before);
            }
        }
    }

    #[test]
    fn binning_is_half_open_with_closed_end() {
        let g = raw_column(&[0.0; 4]);
        assert_eq!(g.bin(2, 1.0), Some(0));
        assert_eq!(g.bin(2, 2.0), Some(1));
        assert_eq!(g.bin(2, 5.0), Some(3));
        assert_eq!(g.bin(2, 5.0 + 1e-12), None);
        assert_eq!(g.bin(2, 0.999), None);
    }

    #[test]
    fn refresh_windows() {
        let schedule = RefreshSchedule::new(2500).unwrap();
        assert!(RefreshSchedule::new(0).is_err());
        let mut cache = GridCache::new(schedule);
        let mut builds = Vec::new();
        for step in [0, 1, 2499, 2500, 4999, 5000] {
            let value = *cache
                .get(step, |epoch| {
                    builds.push(epoch);
                    Ok::<_, Error>(epoch * 10)
                })
                .unwrap();
            assert_eq!(value, schedule.epoch(step) * 10);
        }
        assert_eq!(builds, vec![0, 1, 2]);
    }
}
