use super::image::{DepthImage, SilhouetteImage};
use crate::geometry::{view_to_camera_transform, CameraModel, TriangleMesh, Vec3, Viewpoint};

/// A clipped, projected triangle: screen position in pixels plus camera depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenTriangle {
    pub face: usize,
    pub xy: [[f64; 2]; 3],
    pub depth: [f64; 3],
}

/// Clips every face against the near and far planes and projects the pieces.
/// A face straddling a plane yields up to three screen triangles.
pub fn screen_triangles(mesh: &TriangleMesh, vp: &Viewpoint, cam: &CameraModel) -> Vec<ScreenTriangle> {
    let xf = view_to_camera_transform(vp, cam);
    let cam_pts: Vec<Vec3> = mesh.vertices.iter().map(|v| xf.apply(v)).collect();
    let f = cam.focal_px();
    let (cx, cy) = cam.principal_point();
    let mut out = Vec::with_capacity(mesh.faces.len());
    let mut poly = Vec::with_capacity(5);
    for (face, idx) in mesh.faces.iter().enumerate() {
        let tri = idx.map(|i| cam_pts[i]);
        poly.clear();
        if tri.iter().all(|p| p.z >= cam.near && p.z <= cam.far) {
            poly.extend_from_slice(&tri);
        } else {
            if tri.iter().all(|p| p.z < cam.near) || tri.iter().all(|p| p.z > cam.far) {
                continue;
            }
            clip_polygon(&tri, &mut poly, cam.near, cam.far);
            if poly.len() < 3 {
                continue;
            }
        }
        let proj = |p: &Vec3| [cx + f * p.x / p.z, cy + f * p.y / p.z];
        for k in 1..poly.len() - 1 {
            let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
            out.push(ScreenTriangle { face, xy: [proj(&a), proj(&b), proj(&c)], depth: [a.z, b.z, c.z] });
        }
    }
    out
}

fn clip_polygon(tri: &[Vec3; 3], out: &mut Vec<Vec3>, near: f64, far: f64) {
    let mut tmp: Vec<Vec3> = tri.to_vec();
    // keep z >= near, then z <= far
    for (plane, keep_above) in [(near, true), (far, false)] {
        let inside = |p: &Vec3| if keep_above { p.z >= plane } else { p.z <= plane };
        let mut next = Vec::with_capacity(tmp.len() + 1);
        for i in 0..tmp.len() {
            let a = tmp[i];
            let b = tmp[(i + 1) % tmp.len()];
            if inside(&a) {
                next.push(a);
            }
            if inside(&a) != inside(&b) {
                let t = (plane - a.z) / (b.z - a.z);
                let mut p = a + (b - a) * t;
                p.z = plane;
                next.push(p);
            }
        }
        tmp = next;
        if tmp.is_empty() {
            break;
        }
    }
    out.extend(tmp);
}

/// Calls `visit(pixel_index, depth)` for every covered pixel centre.
fn scan_convert(tri: &ScreenTriangle, width: u32, height: u32, mut visit: impl FnMut(usize, f64)) {
    let [a, mut b, mut c] = tri.xy;
    let [za, mut zb, mut zc] = tri.depth;
    let mut area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut b, &mut c);
        std::mem::swap(&mut zb, &mut zc);
        area = -area;
    }
    let min_x = a[0].min(b[0]).min(c[0]);
    let max_x = a[0].max(b[0]).max(c[0]);
    let min_y = a[1].min(b[1]).min(c[1]);
    let max_y = a[1].max(b[1]).max(c[1]);
    // pixel centres x + 0.5 inside [min_x, max_x]
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let edges = [(b, c), (c, a), (a, b)];
    let top_left = edges.map(|(p, q)| {
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        dy < 0.0 || (dy == 0.0 && dx > 0.0)
    });
    let inv = [1.0 / za, 1.0 / zb, 1.0 / zc];
    for py in y0 as u32..=y1 as u32 {
        let sy = py as f64 + 0.5;
        for px in x0 as u32..=x1 as u32 {
            let sx = px as f64 + 0.5;
            let mut w = [0.0; 3];
            let mut covered = true;
            for (k, (p, q)) in edges.iter().enumerate() {
                w[k] = (q[0] - p[0]) * (sy - p[1]) - (q[1] - p[1]) * (sx - p[0]);
                if w[k] < 0.0 || (w[k] == 0.0 && !top_left[k]) {
                    covered = false;
                    break;
                }
            }
            if !covered {
                continue;
            }
            // barycentric weight of vertex k is the edge function opposite it
            let inv_z = (w[0] * inv[0] + w[1] * inv[1] + w[2] * inv[2]) / area;
            visit(py as usize * width as usize + px as usize, 1.0 / inv_z);
        }
    }
}

/// Binary silhouette: 1 where a pixel centre is covered by any clipped face.
pub fn rasterize_silhouette(mesh: &TriangleMesh, vp: &Viewpoint, cam: &CameraModel) -> SilhouetteImage {
    let mut img = SilhouetteImage::zeros(cam.width, cam.height);
    for tri in screen_triangles(mesh, vp, cam) {
        scan_convert(&tri, cam.width, cam.height, |i, _| img.values[i] = 1.0);
    }
    img
}

/// Nearest depth per covered pixel, interpolated perspective-correctly.
pub fn rasterize_depth(mesh: &TriangleMesh, vp: &Viewpoint, cam: &CameraModel) -> DepthImage {
    let mut img = DepthImage::empty(cam.width, cam.height);
    for tri in screen_triangles(mesh, vp, cam) {
        scan_convert(&tri, cam.width, cam.height, |i, z| {
            let slot = &mut img.values[i];
            if slot.is_none_or(|d| z < d) {
                *slot = Some(z);
            }
        });
    }
    img
}
