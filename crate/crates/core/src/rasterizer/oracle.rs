use rayon::prelude::*;

use super::image::SilhouetteImage;
use crate::geometry::{view_to_camera_transform, CameraModel, TriangleMesh, Vec3, Viewpoint};

const EPS: f64 = 1e-9;

/// Möller–Trumbore: distance along `dir` from `origin` to the triangle, if hit.
pub fn ray_triangle_distance(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(-EPS..=1.0 + EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -EPS || u + v > 1.0 + EPS {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Casts one world-space ray per pixel centre and marks pixels whose ray
/// meets any face between the near and far planes.
pub fn raycast_silhouette_oracle(mesh: &TriangleMesh, vp: &Viewpoint, cam: &CameraModel) -> SilhouetteImage {
    let xf = view_to_camera_transform(vp, cam);
    let origin = xf.origin();
    let f = cam.focal_px();
    let (cx, cy) = cam.principal_point();
    let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|i| mesh.triangle(i)).collect();
    let w = cam.width as usize;
    let mut img = SilhouetteImage::zeros(cam.width, cam.height);
    img.values.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            // unit camera depth along this direction, so t is the depth
            let local = Vec3::new((x as f64 + 0.5 - cx) / f, (y as f64 + 0.5 - cy) / f, 1.0);
            let dir = xf.rotation.transpose() * local;
            let hit = tris
                .iter()
                .any(|t| ray_triangle_distance(&origin, &dir, t).is_some_and(|t| t > cam.near && t < cam.far));
            *out = if hit { 1.0 } else { 0.0 };
        }
    });
    img
}
