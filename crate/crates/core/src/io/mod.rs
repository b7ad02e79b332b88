pub mod dump;
pub mod export;
pub mod rig;
pub mod scene;

pub use dump::{GridDump, GridKind, VoxelSdf};
pub use rig::{load_rig, CameraRecord};
pub use scene::{BoundarySpec, SceneDescription};
