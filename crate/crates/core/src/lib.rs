//! 3D stages of a 2D-3D-2D semantic correspondence cycle.
//!
//! A predicted occupancy grid is meshed with marching cubes, the viewpoint
//! estimate is refined by descending a silhouette discrepancy through a soft
//! rasterizer, semantic keypoints are transferred onto the mesh by exact
//! nearest-neighbour search in embedding space, and the keypoints are
//! projected back with z-buffer visibility and scored with PCK.

pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod isosurface;
mod json;
pub mod pipeline;
pub mod pose_opt;
pub mod project_eval;
pub mod rasterizer;
pub mod transfer;

pub use error::{Error, Result};
pub use geometry::{BinDistribution, CameraModel, RigidTransform, TriangleMesh, Vec3, Viewpoint, VoxelGrid};
