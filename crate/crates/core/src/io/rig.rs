//! Camera rig files: a JSON array of cameras.
//!
//! ```json
//! [
//!   {
//!     "rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1],
//!     "center": [0, 0, -3],
//!     "fx": 32, "fy": 32, "cx": 32, "cy": 32,
//!     "width": 64, "height": 64
//!   }
//! ]
//! ```
//!
//! `rotation` is row-major; world points map into the camera frame as
//! `rotation^T (x - center)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Intrinsics, Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub rotation: [f64; 9],
    pub center: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraRecord {
    pub fn to_camera(&self) -> Result<Camera> {
        Camera::new(
            Mat3::from_row_slice(&self.rotation),
            Vec3::from(self.center),
            Intrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
            },
            self.width,
            self.height,
        )
    }
}

impl From<&Camera> for CameraRecord {
    fn from(cam: &Camera) -> Self {
        let r = cam.rotation();
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[3 * row + col] = r[(row, col)];
            }
        }
        let k = cam.intrinsics();
        Self {
            rotation,
            center: (*cam.center()).into(),
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: cam.width(),
            height: cam.height(),
        }
    }
}

pub fn parse_rig(text: &str, path: &Path) -> Result<Vec<Camera>> {
    let records: Vec<CameraRecord> = serde_json::from_str(text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_camera()
                .map_err(|e| Error::InvalidCamera(format!("{}: camera {i}: {e}", path.display())))
        })
        .collect()
}

pub fn load_rig(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rig(&text, path)
}

pub fn rig_to_json(cameras: &[Camera]) -> String {
    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from).collect();
    serde_json::to_string_pretty(&records).expect("records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::sphere_rig;

    #[test]
    fn parses_documented_example() {
        let text = r#"[{"rotation":[1,0,0,0,1,0,0,0,1],"center":[0,0,-3],
            "fx":32,"fy":32,"cx":32,"cy":32,"width":64,"height":64}]"#;
        let cams = parse_rig(text, Path::new("rig.json")).unwrap();
        assert_eq!(cams.len(), 1);
        assert_eq!(*cams[0].center(), Vec3::new(0.0, 0.0, -3.0));
    }

    #[test]
    fn rotation_is_row_major() {
        let text = r#"[{"rotation":[0,-1,0,1,0,0,0,0,1],"center":[0,0,0],
            "fx":1,"fy":1,"cx":0,"cy":0,"width":1,"height":1}]"#;
        let cams = parse_rig(text, Path::new("rig.json")).unwrap();
        assert_eq!(cams[0].rotation()[(0, 1)], -1.0);
    }

    #[test]
    fn round_trips_through_json() {
        let cams = sphere_rig(3);
        let back = parse_rig(&rig_to_json(&cams), Path::new("x")).unwrap();
        assert_eq!(cams, back);
    }

    #[test]
    fn reports_invalid_cameras() {
        let text = r#"[{"rotation":[2,0,0,0,1,0,0,0,1],"center":[0,0,0],
            "fx":1,"fy":1,"cx":0,"cy":0,"width":1,"height":1}]"#;
        let err = parse_rig(text, Path::new("bad.json")).unwrap_err();
        assert!(err.to_string().contains("bad.json"));
        assert!(parse_rig("{", Path::new("x")).is_err());
    }
}
