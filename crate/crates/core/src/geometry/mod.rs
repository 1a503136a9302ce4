//! Spatial types shared by every stage: the camera convention, meshes,
//! occupancy grids and the discrete viewpoint bins.

mod bins;
mod camera;
mod mesh;
mod voxel;

pub use bins::{
    circular_bin_distance, decode_viewpoint_bins, encode_viewpoint_bins, viewpoint_kl_loss, BinDistribution,
    AZIMUTH_BINS, BIN_WIDTH_DEG, ELEVATION_BINS,
};
pub use camera::{
    project_point, unproject_point, view_frame_derivatives, view_to_camera_transform, CameraModel, Projection,
    RigidTransform, Viewpoint,
};
pub use mesh::TriangleMesh;
pub use voxel::VoxelGrid;

pub type Vec3 = nalgebra::Vector3<f64>;
