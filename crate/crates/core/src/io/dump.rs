//! `PSGD` binary grid dumps.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                        |
//! |--------|------|----------------------------------------------|
//! | 0      | 4    | magic `PSGD`                                 |
//! | 4      | 4    | version, u32 = 1                             |
//! | 8      | 1    | kind, u8 (0 = scene, 1 = camera)             |
//! | 9      | 12   | dims, 3 x u32                                |
//! | 21     | 48   | bounds, 6 x f64 as (min, max) per axis       |
//! | 69     | 4n   | payload, f32, first axis fastest             |

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, CameraBounds, Interval, Vec3};
use crate::image_grid::CameraGrid;
use crate::scene_grid::{SceneGrid, SdfField};

pub const MAGIC: &[u8; 4] = b"PSGD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 69;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Scene = 0,
    Camera = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub kind: GridKind,
    pub dims: [u32; 3],
    pub bounds: [f64; 6],
    pub payload: Vec<f32>,
}

impl GridDump {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for b in self.bounds {
            out.extend_from_slice(&b.to_le_bytes());
        }
        for p in &self.payload {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::MalformedDump(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::MalformedDump(format!(
                "unsupported version {version}"
            )));
        }
        let kind = match bytes[8] {
            0 => GridKind::Scene,
            1 => GridKind::Camera,
            k => return Err(Error::MalformedDump(format!("unknown kind {k}"))),
        };
        let dims = [u32_at(9), u32_at(13), u32_at(17)];
        let mut bounds = [0.0; 6];
        for (i, b) in bounds.iter_mut().enumerate() {
            let o = 21 + 8 * i;
            *b = f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| bad("dims overflow"))?;
        let expected = count
            .checked_mul(4)
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| bad("dims overflow"))?;
        if bytes.len() != expected {
            return Err(Error::MalformedDump(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let payload = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            kind,
            dims,
            bounds,
            payload,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn dims_usize(&self) -> [usize; 3] {
        self.dims.map(|d| d as usize)
    }

    fn expect_kind(&self, kind: GridKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::MalformedDump(format!(
                "expected a {kind:?} grid, found {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}

fn dims_u32(resolution: [usize; 3]) -> [u32; 3] {
    resolution.map(|r| r as u32)
}

impl From<&SceneGrid> for GridDump {
    fn from(grid: &SceneGrid) -> Self {
        let b = grid.bounds();
        Self {
            kind: GridKind::Scene,
            dims: dims_u32(grid.resolution()),
            bounds: [b.min.x, b.max.x, b.min.y, b.max.y, b.min.z, b.max.z],
            payload: grid.cell_prob().iter().map(|&p| p as f32).collect(),
        }
    }
}

/// Dumps the normalized view-dependent distribution of a camera grid.
impl From<&CameraGrid> for GridDump {
    fn from(grid: &CameraGrid) -> Self {
        let b = grid.bounds();
        Self {
            kind: GridKind::Camera,
            dims: dims_u32(grid.resolution()),
            bounds: [
                b.u_range.min,
                b.u_range.max,
                b.v_range.min,
                b.v_range.max,
                b.lambda_range.min,
                b.lambda_range.max,
            ],
            payload: grid.viewdep_prob().iter().map(|&p| p as f32).collect(),
        }
    }
}

impl GridDump {
    pub fn scene_box(&self) -> Aabb {
        let b = self.bounds;
        Aabb::new(Vec3::new(b[0], b[2], b[4]), Vec3::new(b[1], b[3], b[5]))
    }

    pub fn to_scene_grid(&self, s: f64) -> Result<SceneGrid> {
        self.expect_kind(GridKind::Scene)?;
        let values = self.payload.iter().map(|&p| p as f64).collect();
        SceneGrid::from_values(self.scene_box(), self.dims_usize(), values, s)
    }

    /// Reads a camera dump back as a sampling distribution.
    pub fn to_camera_grid(&self, camera_id: usize) -> Result<CameraGrid> {
        self.expect_kind(GridKind::Camera)?;
        let b = self.bounds;
        let bounds = CameraBounds {
            u_range: Interval::new(b[0], b[1]),
            v_range: Interval::new(b[2], b[3]),
            lambda_range: Interval::new(b[4], b[5]),
        };
        let values = self.payload.iter().map(|&p| p as f64).collect();
        CameraGrid::from_distribution(camera_id, bounds, self.dims_usize(), values)
    }

    /// Interprets a scene dump as SDF samples at cell centers.
    pub fn to_voxel_sdf(&self) -> Result<VoxelSdf> {
        self.expect_kind(GridKind::Scene)?;
        Ok(VoxelSdf {
            bounds: self.scene_box(),
            dims: self.dims_usize(),
            values: self.payload.iter().map(|&p| p as f64).collect(),
        })
    }
}

/// SDF sampled at cell centers of a regular grid, trilinearly interpolated
/// and clamped at the border.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSdf {
    bounds: Aabb,
    dims: [usize; 3],
    values: Vec<f64>,
}

impl VoxelSdf {
    pub fn new(bounds: Aabb, dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) || values.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidParameter("voxel SDF size mismatch".into()));
        }
        Ok(Self {
            bounds,
            dims,
            values,
        })
    }

    /// Samples `sdf` at the cell centers.
    pub fn sample(sdf: &dyn SdfField, bounds: Aabb, dims: [usize; 3]) -> Result<Self> {
        let proto = SceneGrid::from_values(bounds, dims, vec![0.0; dims.iter().product()], 1.0)?;
        let values = (0..proto.len())
            .map(|i| sdf.distance(&proto.cell_center(i)))
            .collect();
        Self::new(bounds, dims, values)
    }

    pub fn to_dump(&self) -> GridDump {
        let b = &self.bounds;
        GridDump {
            kind: GridKind::Scene,
            dims: dims_u32(self.dims),
            bounds: [b.min.x, b.max.x, b.min.y, b.max.y, b.min.z, b.max.z],
            payload: self.values.iter().map(|&v| v as f32).collect(),
        }
    }

    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }
}

impl SdfField for VoxelSdf {
    fn distance(&self, p: &Vec3) -> f64 {
        let ext = self.bounds.extent();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let t =
                ((p[a] - self.bounds.min[a]) / ext[a] * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n.saturating_sub(2));
            base[a] = i;
            frac[a] = if n == 1 { 0.0 } else { t - i as f64 };
        }
        let next = |a: usize| (base[a] + 1).min(self.dims[a] - 1);
        let mut value = 0.0;
        for corner in 0..8 {
            let pick = |a: usize| corner >> a & 1 == 1;
            let idx = |a: usize| if pick(a) { next(a) } else { base[a] };
            let w: f64 = (0..3)
                .map(|a| if pick(a) { frac[a] } else { 1.0 - frac[a] })
                .product();
            if w > 0.0 {
                value += w * self.at(idx(0), idx(1), idx(2));
            }
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_dump() -> GridDump {
        GridDump {
            kind: GridKind::Camera,
            dims: [2, 3, 1],
            bounds: [-1.0, 1.0, -0.5, 0.5, 2.0, 4.0],
            payload: vec![0.0, 0.1, 0.2, 0.3, 0.15, 0.25],
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample_dump().to_bytes();
        assert_eq!(&bytes[..4], b"PSGD");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 1);
        assert_eq!(&bytes[9..13], &[2, 0, 0, 0]);
        assert_eq!(&bytes[21..29], &(-1.0f64).to_le_bytes());
        assert_eq!(bytes.len(), 69 + 6 * 4);
        assert_eq!(&bytes[69..73], &0.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_malformed_input() {
        let bytes = sample_dump().to_bytes();
        assert!(GridDump::from_bytes(&bytes[..60]).is_err());
        assert!(GridDump::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(GridDump::from_bytes(&wrong).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 2;
        assert!(GridDump::from_bytes(&wrong).is_err());
        let mut wrong = bytes;
        wrong[8] = 7;
        assert!(GridDump::from_bytes(&wrong).is_err());
    }

    #[test]
    fn kind_mismatch_is_reported() {
        assert!(sample_dump().to_scene_grid(1.0).is_err());
        let g = sample_dump().to_camera_grid(3).unwrap();
        assert_eq!(g.camera_id(), 3);
        assert_eq!(g.resolution(), [2, 3, 1]);
    }

    #[test]
    fn voxel_sdf_reproduces_linear_field() {
        let bounds = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let plane = |p: &Vec3| 0.5 * p.x - 0.25 * p.y + p.z;
        let vox = VoxelSdf::sample(&plane, bounds, [8, 8, 8]).unwrap();
        for p in [
            Vec3::new(0.1, 0.2, -0.3),
            Vec3::new(-0.7, 0.8, 0.6),
            Vec3::zeros(),
        ] {
            assert!((vox.distance(&p) - plane(&p)).abs() < 1e-12);
        }
        let back = vox.to_dump().to_voxel_sdf().unwrap();
        assert!((back.distance(&Vec3::zeros()) - vox.distance(&Vec3::zeros())).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn bytes_round_trip_exactly(
            dims in proptest::array::uniform3(1u32..5),
            bounds in proptest::array::uniform6(any::<f64>()),
            seed in any::<u32>(),
            scene in any::<bool>(),
        ) {
            let n = dims.iter().product::<u32>() as usize;
            let payload = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32))).collect();
            let dump = GridDump {
                kind: if scene { GridKind::Scene } else { GridKind::Camera },
                dims,
                bounds,
                payload,
            };
            let bytes = dump.to_bytes();
            let back = GridDump::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
