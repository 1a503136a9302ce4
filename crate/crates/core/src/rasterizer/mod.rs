//! Silhouette and depth rendering of triangle meshes.
//!
//! [`rasterize_silhouette`] and [`rasterize_depth`] share one scan converter
//! (pixel centres at `x + 0.5`, top-left fill rule, near/far clipping, no
//! back-face culling). [`soft_silhouette`] is the differentiable variant used
//! for pose refinement, and [`raycast_silhouette_oracle`] is a per-pixel ray
//! caster with no code in common with the scan converter.

mod hard;
mod image;
mod oracle;
mod soft;

pub use hard::{rasterize_depth, rasterize_silhouette, screen_triangles, ScreenTriangle};
pub use image::{DepthImage, SilhouetteImage};
pub use oracle::{ray_triangle_distance, raycast_silhouette_oracle};
pub use soft::{soft_silhouette, soft_silhouette_with_jacobian, SoftJacobian, DEFAULT_SHARPNESS};
