//! Pinhole camera model and the transforms between world space, camera
//! space and the per-camera image space `(u, v, lambda)`.
//!
//! The image space holds intrinsics-free normalized coordinates
//! `u = x/z`, `v = y/z` together with the z-depth `lambda`. Intrinsics only
//! enter when pixels are mapped into `(u, v)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// A calibrated pinhole camera.
///
/// World points map into the camera frame as `rotation^T (x - center)`, so
/// the columns of `rotation` are the camera axes expressed in world
/// coordinates (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    rotation: Mat3,
    center: Vec3,
    intrinsics: Intrinsics,
    width: u32,
    height: u32,
}

impl Camera {
    pub fn new(
        rotation: Mat3,
        center: Vec3,
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let identity = Mat3::identity();
        if (gram - identity).iter().any(|d| d.abs() > ORTHONORMAL_TOL) {
            return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
        }
        if (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidCamera(
                "rotation must have determinant +1".into(),
            ));
        }
        if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
            return Err(Error::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        if !(intrinsics.cx.is_finite() && intrinsics.cy.is_finite()) {
            return Err(Error::InvalidCamera(
                "principal point must be finite".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(
                "image size must be at least 1x1".into(),
            ));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCamera("center must be finite".into()));
        }
        Ok(Self {
            rotation,
            center,
            intrinsics,
            width,
            height,
        })
    }

    /// Camera at `center` whose optical axis points at `target`.
    pub fn look_at(
        center: Vec3,
        target: Vec3,
        up: Vec3,
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("target coincides with center".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("up vector is parallel to view".into()))?;
        let down = forward.cross(&right);
        let rotation = Mat3::from_columns(&[right, down, forward]);
        Self::new(rotation, center, intrinsics, width, height)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Maps a pixel position to normalized image coordinates.
    pub fn pixel_to_image(&self, px: f64, py: f64) -> (f64, f64) {
        let k = &self.intrinsics;
        ((px - k.cx) / k.fx, (py - k.cy) / k.fy)
    }

    pub fn image_to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let k = &self.intrinsics;
        (u * k.fx + k.cx, v * k.fy + k.cy)
    }
}

/// A point of the 3-dimensional image space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSpacePoint {
    pub u: f64,
    pub v: f64,
    pub lambda: f64,
}

impl ImageSpacePoint {
    pub fn new(u: f64, v: f64, lambda: f64) -> Self {
        Self { u, v, lambda }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Extent of a camera's image-space grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraBounds {
    pub u_range: Interval,
    pub v_range: Interval,
    pub lambda_range: Interval,
}

impl CameraBounds {
    pub fn contains(&self, p: &ImageSpacePoint) -> bool {
        self.u_range.contains(p.u)
            && self.v_range.contains(p.v)
            && self.lambda_range.contains(p.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        self.extent().product()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Slab test; returns the entry and exit ray distances.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let (a, b) = {
                let a = (self.min[i] - origin[i]) * inv;
                let b = (self.max[i] - origin[i]) * inv;
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// Region of space that holds the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneBoundary {
    /// Origin-centered sphere.
    Sphere {
        radius: f64,
    },
    Box(Aabb),
}

impl Default for SceneBoundary {
    fn default() -> Self {
        SceneBoundary::Sphere { radius: 1.0 }
    }
}

impl SceneBoundary {
    pub fn enclosing_box(&self) -> Aabb {
        match *self {
            SceneBoundary::Sphere { radius } => {
                Aabb::new(Vec3::repeat(-radius), Vec3::repeat(radius))
            }
            SceneBoundary::Box(b) => b,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            SceneBoundary::Sphere { radius } => p.norm() <= *radius,
            SceneBoundary::Box(b) => b.contains(p),
        }
    }

    /// Entry and exit distances of the ray `origin + t * dir` (unit `dir`).
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        match *self {
            SceneBoundary::Sphere { radius } => {
                let b = origin.dot(dir);
                let c = origin.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                Some((-b - root, -b + root))
            }
            SceneBoundary::Box(b) => b.intersect(origin, dir),
        }
    }
}

pub fn world_to_camera(cam: &Camera, x: &Vec3) -> Vec3 {
    cam.rotation.transpose() * (x - cam.center)
}

pub fn camera_to_world(cam: &Camera, xhat: &Vec3) -> Vec3 {
    cam.rotation * xhat + cam.center
}

pub fn camera_to_image(xhat: &Vec3) -> Result<ImageSpacePoint> {
    let z = xhat.z;
    if !(z > 0.0) {
        return Err(Error::BehindCamera { depth: z });
    }
    Ok(ImageSpacePoint::new(xhat.x / z, xhat.y / z, z))
}

pub fn project(cam: &Camera, x: &Vec3) -> Result<ImageSpacePoint> {
    camera_to_image(&world_to_camera(cam, x))
}

pub fn unproject(cam: &Camera, p: &ImageSpacePoint) -> Result<Vec3> {
    if !(p.lambda > 0.0) {
        return Err(Error::InvalidDepth(p.lambda));
    }
    let xhat = Vec3::new(p.u * p.lambda, p.v * p.lambda, p.lambda);
    Ok(camera_to_world(cam, &xhat))
}

/// World-space ray through an image-space sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    /// Euclidean distance from `origin` to the sampled point.
    pub depth: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

pub fn ray_from_sample(cam: &Camera, sample: &ImageSpacePoint) -> Result<Ray> {
    let x = unproject(cam, sample)?;
    let offset = x - cam.center;
    let depth = offset.norm();
    Ok(Ray {
        origin: cam.center,
        direction: offset / depth,
        depth,
    })
}

/// Factor converting z-depth into distance along the ray through `(u, v)`.
pub fn depth_to_ray_distance(u: f64, v: f64) -> f64 {
    (u * u + v * v + 1.0).sqrt()
}

/// Image-space bounds from the image corners and the central pixel ray.
///
/// When the camera sits inside the boundary the near depth is clamped to a
/// small fraction of the far depth.
pub fn compute_bounds(cam: &Camera, boundary: &SceneBoundary) -> Result<CameraBounds> {
    let (w, h) = (cam.width as f64, cam.height as f64);
    let (u0, v0) = cam.pixel_to_image(0.0, 0.0);
    let (u1, v1) = cam.pixel_to_image(w, h);
    let u_range = Interval::new(u0.min(u1), u0.max(u1));
    let v_range = Interval::new(v0.min(v1), v0.max(v1));

    let (uc, vc) = cam.pixel_to_image(w / 2.0, h / 2.0);
    let scale = depth_to_ray_distance(uc, vc);
    let dir = cam.rotation * Vec3::new(uc, vc, 1.0) / scale;
    let (t_near, t_far) = boundary
        .intersect(&cam.center, &dir)
        .ok_or(Error::NoIntersection)?;
    if !(t_far > 0.0) {
        return Err(Error::NoIntersection);
    }
    let t_near = t_near.max(1e-3 * t_far);
    Ok(CameraBounds {
        u_range,
        v_range,
        lambda_range: Interval::new(t_near / scale, t_far / scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intrinsics() -> Intrinsics {
        Intrinsics {
            fx: 32.0,
            fy: 32.0,
            cx: 32.0,
            cy: 32.0,
        }
    }

    fn identity_at(center: Vec3) -> Camera {
        Camera::new(Mat3::identity(), center, intrinsics(), 64, 64).unwrap()
    }

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(-3.0..3.0);
        nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
            .into_inner()
    }

    fn random_camera(rng: &mut impl Rng) -> Camera {
        let c = Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        Camera::new(random_rotation(rng), c, intrinsics(), 64, 64).unwrap()
    }

    #[test]
    fn translation_only_transform() {
        let cam = identity_at(Vec3::new(0.0, 0.0, -3.0));
        assert_eq!(
            world_to_camera(&cam, &Vec3::zeros()),
            Vec3::new(0.0, 0.0, 3.0)
        );
        let cam = identity_at(Vec3::zeros());
        assert_eq!(
            world_to_camera(&cam, &Vec3::new(1.0, 2.0, 3.0)),
            Vec3::new(1.0, 2.0, 3.0)
        );
    }

    #[test]
    fn rotation_about_z() {
        // R rotates by +90 degrees about z; R^T x for x = e_x is (0, -1, 0).
        let r = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let cam = Camera::new(r, Vec3::zeros(), intrinsics(), 64, 64).unwrap();
        let got = world_to_camera(&cam, &Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(got, Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_cameras() {
        let skew = Mat3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(skew, Vec3::zeros(), intrinsics(), 4, 4).is_err());
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Camera::new(reflect, Vec3::zeros(), intrinsics(), 4, 4).is_err());
        let mut k = intrinsics();
        k.fx = 0.0;
        assert!(Camera::new(Mat3::identity(), Vec3::zeros(), k, 4, 4).is_err());
        assert!(Camera::new(Mat3::identity(), Vec3::zeros(), intrinsics(), 0, 4).is_err());
    }

    #[test]
    fn perspective_divide() {
        let p = camera_to_image(&Vec3::new(2.0, 4.0, 2.0)).unwrap();
        assert_eq!(p, ImageSpacePoint::new(1.0, 2.0, 2.0));
        let p = camera_to_image(&Vec3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(p, ImageSpacePoint::new(0.0, 0.0, 5.0));
        assert!(matches!(
            camera_to_image(&Vec3::new(1.0, 1.0, -1.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn project_examples() {
        let cam = identity_at(Vec3::zeros());
        let p = project(&cam, &Vec3::new(0.5, 0.5, 1.0)).unwrap();
        assert_eq!(p, ImageSpacePoint::new(0.5, 0.5, 1.0));
        let cam = identity_at(Vec3::new(0.0, 0.0, -3.0));
        assert_eq!(
            project(&cam, &Vec3::zeros()).unwrap(),
            ImageSpacePoint::new(0.0, 0.0, 3.0)
        );
    }

    #[test]
    fn unproject_examples() {
        let cam = identity_at(Vec3::zeros());
        assert_eq!(
            unproject(&cam, &ImageSpacePoint::new(0.0, 0.0, 2.0)).unwrap(),
            Vec3::new(0.0, 0.0, 2.0)
        );
        assert_eq!(
            unproject(&cam, &ImageSpacePoint::new(1.0, 1.0, 2.0)).unwrap(),
            Vec3::new(2.0, 2.0, 2.0)
        );
        assert!(matches!(
            unproject(&cam, &ImageSpacePoint::new(0.0, 0.0, 0.0)),
            Err(Error::InvalidDepth(_))
        ));
    }

    #[test]
    fn round_trip_random_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let p = ImageSpacePoint::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.1..10.0),
            );
            let x = unproject(&cam, &p).unwrap();
            let q = project(&cam, &x).unwrap();
            assert!((p.u - q.u).abs() < 1e-9);
            assert!((p.v - q.v).abs() < 1e-9);
            assert!((p.lambda - q.lambda).abs() < 1e-9);
            let y = unproject(&cam, &q).unwrap();
            assert!((x - y).norm() <= 1e-9 * x.norm().max(1.0));
        }
    }

    #[test]
    fn on_axis_and_diagonal_rays() {
        let cam = identity_at(Vec3::zeros());
        let ray = ray_from_sample(&cam, &ImageSpacePoint::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(ray.origin, Vec3::zeros());
        assert_eq!(ray.direction, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(ray.depth, 2.0);

        let ray = ray_from_sample(&cam, &ImageSpacePoint::new(1.0, 0.0, 1.0)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(ray.direction, Vec3::new(h, 0.0, h), epsilon = 1e-15);
        assert_relative_eq!(ray.depth, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn rays_reproject_to_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let p = ImageSpacePoint::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.1..10.0),
            );
            let ray = ray_from_sample(&cam, &p).unwrap();
            assert!((ray.direction.norm() - 1.0).abs() < 1e-12);
            assert!((ray.depth - p.lambda * depth_to_ray_distance(p.u, p.v)).abs() < 1e-9);
            let q = project(&cam, &ray.at(ray.depth)).unwrap();
            assert!((p.u - q.u).abs() < 1e-9 && (p.v - q.v).abs() < 1e-9);
            assert!((p.lambda - q.lambda).abs() < 1e-9);
        }
    }

    #[test]
    fn bounds_for_camera_facing_unit_sphere() {
        let cam = identity_at(Vec3::new(0.0, 0.0, -3.0));
        let b = compute_bounds(&cam, &SceneBoundary::Sphere { radius: 1.0 }).unwrap();
        assert_relative_eq!(b.lambda_range.min, 2.0, epsilon = 1e-12);
        assert_relative_eq!(b.lambda_range.max, 4.0, epsilon = 1e-12);
        assert_eq!(b.u_range, Interval::new(-1.0, 1.0));
        assert_eq!(b.v_range, Interval::new(-1.0, 1.0));
    }

    #[test]
    fn bounds_for_box_boundary() {
        let cam = identity_at(Vec3::new(0.0, 0.0, -3.0));
        let boundary = SceneBoundary::Box(Aabb::new(Vec3::repeat(-0.5), Vec3::repeat(0.5)));
        let b = compute_bounds(&cam, &boundary).unwrap();
        assert_relative_eq!(b.lambda_range.min, 2.5, epsilon = 1e-12);
        assert_relative_eq!(b.lambda_range.max, 3.5, epsilon = 1e-12);
    }

    #[test]
    fn camera_facing_away_misses() {
        let cam = Camera::look_at(
            Vec3::new(0.0, 0.0, -3.0),
            Vec3::new(0.0, 0.0, -6.0),
            Vec3::new(0.0, 1.0, 0.0),
            intrinsics(),
            64,
            64,
        )
        .unwrap();
        assert!(matches!(
            compute_bounds(&cam, &SceneBoundary::Sphere { radius: 1.0 }),
            Err(Error::NoIntersection)
        ));
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let cam = Camera::look_at(
            Vec3::new(3.0, 1.0, -2.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            intrinsics(),
            64,
            64,
        )
        .unwrap();
        let p = project(&cam, &Vec3::zeros()).unwrap();
        assert!(p.u.abs() < 1e-12 && p.v.abs() < 1e-12);
        assert_relative_eq!(p.lambda, 14f64.sqrt(), epsilon = 1e-12);
        // World up projects towards negative v (image y grows downward).
        let above = project(&cam, &Vec3::new(0.0, 0.1, 0.0)).unwrap();
        assert!(above.v < 0.0);
    }

    #[test]
    fn jacobian_determinant_is_depth_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for _ in 0..50 {
            let cam = random_camera(&mut rng);
            let p = ImageSpacePoint::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..5.0),
            );
            let mut jac = Mat3::zeros();
            for k in 0..3 {
                let mut lo = [p.u, p.v, p.lambda];
                let mut hi = lo;
                lo[k] -= h;
                hi[k] += h;
                let a = unproject(&cam, &ImageSpacePoint::new(lo[0], lo[1], lo[2])).unwrap();
                let b = unproject(&cam, &ImageSpacePoint::new(hi[0], hi[1], hi[2])).unwrap();
                jac.set_column(k, &((b - a) / (2.0 * h)));
            }
            let expected = p.lambda * p.lambda;
            assert!((jac.determinant() - expected).abs() < 1e-5 * expected);
        }
    }
}
