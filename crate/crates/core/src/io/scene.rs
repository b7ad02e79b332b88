//! Scene descriptions: boundary, analytic shapes and a camera rig reference.
//!
//! ```json
//! {
//!   "boundary": { "sphere": { "radius": 1.0 } },
//!   "shapes": [ { "type": "sphere", "center": [0, 0, 0], "radius": 0.8 } ],
//!   "cameras": "sphere_rig.json"
//! }
//! ```
//!
//! An empty shape list means the scene is initialized as the boundary itself.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, SceneBoundary, Vec3};
use crate::testbed::AnalyticSdf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySpec {
    Sphere { radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec::Sphere { radius: 1.0 }
    }
}

impl BoundarySpec {
    pub fn to_boundary(&self) -> Result<SceneBoundary> {
        match self {
            BoundarySpec::Sphere { radius } if *radius > 0.0 => {
                Ok(SceneBoundary::Sphere { radius: *radius })
            }
            BoundarySpec::Box { min, max } if (0..3).all(|i| min[i] < max[i]) => Ok(
                SceneBoundary::Box(Aabb::new(Vec3::from(*min), Vec3::from(*max))),
            ),
            _ => Err(Error::InvalidParameter("degenerate scene boundary".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub shapes: Vec<AnalyticSdf>,
    /// Rig file, relative to the scene file.
    #[serde(default)]
    pub cameras: Option<PathBuf>,
}

impl SceneDescription {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut scene: SceneDescription = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if let (Some(rig), Some(dir)) = (scene.cameras.as_mut(), path.parent()) {
            if rig.is_relative() {
                *rig = dir.join(&*rig);
            }
        }
        Ok(scene)
    }

    /// The scene's SDF, or the boundary shape when no shapes are listed.
    pub fn sdf(&self) -> Result<AnalyticSdf> {
        Ok(match self.shapes.len() {
            0 => AnalyticSdf::from_boundary(&self.boundary.to_boundary()?),
            1 => self.shapes[0].clone(),
            _ => AnalyticSdf::union(self.shapes.clone()),
        })
    }
}
