use rayon::prelude::*;

use super::image::SilhouetteImage;
use crate::geometry::{view_frame_derivatives, view_to_camera_transform, CameraModel, TriangleMesh, Viewpoint};

/// Logistic slope per pixel of signed distance at 128 pixels of image width.
pub const DEFAULT_SHARPNESS: f64 = 50.0;

/// Beyond this many logistic units a term counts as exactly 0 or 1.
const SATURATION: f64 = 30.0;

/// Per-pixel derivatives of soft coverage, per degree of azimuth and elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftJacobian {
    pub width: u32,
    pub height: u32,
    pub d_azimuth: Vec<f64>,
    pub d_elevation: Vec<f64>,
}

struct Prepared {
    xy: [[f64; 2]; 3],
    // [parameter][vertex] screen velocity, pixels per degree
    dxy: [[[f64; 2]; 3]; 2],
}

fn effective_sharpness(sharpness: f64, cam: &CameraModel) -> f64 {
    sharpness * 128.0 / cam.width as f64
}

/// Projects faces lying strictly between the near and far planes. Unlike the
/// hard rasterizer nothing is clipped: a clipped vertex would move with the
/// clip plane rather than with the mesh.
fn prepare(mesh: &TriangleMesh, vp: &Viewpoint, cam: &CameraModel, derivs: bool) -> Vec<Prepared> {
    let xf = view_to_camera_transform(vp, cam);
    let (d_az, d_el) = view_frame_derivatives(vp);
    let f = cam.focal_px();
    let (cx, cy) = cam.principal_point();
    let verts: Vec<_> = mesh
        .vertices
        .iter()
        .map(|v| {
            let q = xf.apply(v);
            let xy = [cx + f * q.x / q.z, cy + f * q.y / q.z];
            let mut dxy = [[0.0; 2]; 2];
            if derivs {
                for (slot, dr) in dxy.iter_mut().zip([&d_az, &d_el]) {
                    let dq = dr * v;
                    let z2 = q.z * q.z;
                    *slot = [f * (dq.x * q.z - q.x * dq.z) / z2, f * (dq.y * q.z - q.y * dq.z) / z2];
                }
            }
            (q.z, xy, dxy)
        })
        .collect();
    mesh.faces
        .iter()
        .filter(|face| face.iter().all(|&i| verts[i].0 > cam.near && verts[i].0 < cam.far))
        .map(|face| {
            let mut p = Prepared { xy: [[0.0; 2]; 3], dxy: [[[0.0; 2]; 3]; 2] };
            for (k, &i) in face.iter().enumerate() {
                p.xy[k] = verts[i].1;
                p.dxy[0][k] = verts[i].2[0];
                p.dxy[1][k] = verts[i].2[1];
            }
            p
        })
        .collect()
}

/// Signed distance from `p` to the triangle (positive inside), with its
/// gradient with respect to each screen vertex.
fn signed_distance(p: [f64; 2], v: &[[f64; 2]; 3]) -> (f64, [[f64; 2]; 3]) {
    let mut best = f64::INFINITY;
    let mut grad = [[0.0; 2]; 3];
    let mut w_sum_sign = [0i8; 3];
    for k in 0..3 {
        let (ia, ib) = (k, (k + 1) % 3);
        let (a, b) = (v[ia], v[ib]);
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0]);
        w_sum_sign[k] = if w > 0.0 { 1 } else if w < 0.0 { -1 } else { 0 };
        let l2 = e[0] * e[0] + e[1] * e[1];
        let t = if l2 > 0.0 { ((p[0] - a[0]) * e[0] + (p[1] - a[1]) * e[1]) / l2 } else { 0.0 };
        let mut g = [[0.0; 2]; 3];
        let dist;
        if t <= 0.0 || t >= 1.0 {
            let iv = if t <= 0.0 { ia } else { ib };
            let u = [p[0] - v[iv][0], p[1] - v[iv][1]];
            dist = u[0].hypot(u[1]);
            if dist > 0.0 {
                g[iv] = [-u[0] / dist, -u[1] / dist];
            }
        } else {
            let l = l2.sqrt();
            dist = w.abs() / l;
            let s = w.signum();
            let dw_a = [b[1] - p[1], p[0] - b[0]];
            let dw_b = [p[1] - a[1], a[0] - p[0]];
            let dl_b = [e[0] / l, e[1] / l];
            g[ia] = [s * dw_a[0] / l + dist * dl_b[0] / l, s * dw_a[1] / l + dist * dl_b[1] / l];
            g[ib] = [s * dw_b[0] / l - dist * dl_b[0] / l, s * dw_b[1] / l - dist * dl_b[1] / l];
        }
        if dist < best {
            best = dist;
            grad = g;
        }
    }
    // inside when no edge function disagrees with the others in sign
    let inside = !(w_sum_sign.contains(&1) && w_sum_sign.contains(&-1));
    let area2 = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[1][1] - v[0][1]) * (v[2][0] - v[0][0]);
    if inside && area2 != 0.0 {
        (best, grad)
    } else {
        (-best, grad.map(|g| [-g[0], -g[1]]))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Triangle indices per image row, in ascending order.
fn row_lists(tris: &[Prepared], cam: &CameraModel, margin: f64) -> Vec<Vec<u32>> {
    let mut rows = vec![Vec::new(); cam.height as usize];
    for (i, t) in tris.iter().enumerate() {
        let min_y = t.xy.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min) - margin;
        let max_y = t.xy.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max) + margin;
        let y0 = (min_y - 0.5).ceil().max(0.0);
        let y1 = (max_y - 0.5).floor().min(cam.height as f64 - 1.0);
        if !(y0 <= y1) {
            continue;
        }
        for row in &mut rows[y0 as usize..=y1 as usize] {
            row.push(i as u32);
        }
    }
    rows
}

fn column_range(t: &Prepared, width: u32, margin: f64) -> Option<(usize, usize)> {
    let min_x = t.xy.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min) - margin;
    let max_x = t.xy.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max) + margin;
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    (x0 <= x1).then_some((x0 as usize, x1 as usize))
}

/// Renders one row: coverage, and optionally its two pose derivatives.
fn render_row(
    y: usize,
    list: &[u32],
    tris: &[Prepared],
    width: u32,
    s: f64,
    cover: &mut [f64],
    jac: Option<(&mut [f64], &mut [f64])>,
) {
    let margin = SATURATION / s;
    let py = y as f64 + 0.5;
    let w = width as usize;
    let mut prod = vec![1.0; w];
    let mut saturated = vec![false; w];
    for &ti in list {
        let t = &tris[ti as usize];
        let Some((x0, x1)) = column_range(t, width, margin) else { continue };
        for x in x0..=x1 {
            if saturated[x] {
                continue;
            }
            let (d, _) = signed_distance([x as f64 + 0.5, py], &t.xy);
            let z = s * d;
            if z > SATURATION {
                saturated[x] = true;
            } else if z >= -SATURATION {
                prod[x] *= 1.0 - sigmoid(z);
            }
        }
    }
    for x in 0..w {
        cover[x] = if saturated[x] { 1.0 } else { 1.0 - prod[x] };
    }
    let Some((d_az, d_el)) = jac else { return };
    for &ti in list {
        let t = &tris[ti as usize];
        let Some((x0, x1)) = column_range(t, width, margin) else { continue };
        for x in x0..=x1 {
            if saturated[x] {
                continue;
            }
            let (d, g) = signed_distance([x as f64 + 0.5, py], &t.xy);
            let z = s * d;
            if !(-SATURATION..=SATURATION).contains(&z) {
                continue;
            }
            // d(1 - prod)/dz for this term is (prod / (1 - sigma)) * sigma * (1 - sigma)
            let k = prod[x] * sigmoid(z) * s;
            let mut dd = [0.0; 2];
            for (param, slot) in dd.iter_mut().enumerate() {
                *slot = (0..3).map(|v| g[v][0] * t.dxy[param][v][0] + g[v][1] * t.dxy[param][v][1]).sum();
            }
            d_az[x] += k * dd[0];
            d_el[x] += k * dd[1];
        }
    }
}

fn render(
    mesh: &TriangleMesh,
    vp: &Viewpoint,
    cam: &CameraModel,
    sharpness: f64,
    with_jacobian: bool,
) -> (SilhouetteImage, Option<SoftJacobian>) {
    let s = effective_sharpness(sharpness, cam);
    let tris = prepare(mesh, vp, cam, with_jacobian);
    let rows = row_lists(&tris, cam, SATURATION / s);
    let w = cam.width as usize;
    let mut img = SilhouetteImage::zeros(cam.width, cam.height);
    if !with_jacobian {
        img.values.par_chunks_mut(w).enumerate().for_each(|(y, cover)| {
            render_row(y, &rows[y], &tris, cam.width, s, cover, None);
        });
        return (img, None);
    }
    let mut jac = SoftJacobian {
        width: cam.width,
        height: cam.height,
        d_azimuth: vec![0.0; w * cam.height as usize],
        d_elevation: vec![0.0; w * cam.height as usize],
    };
    img.values
        .par_chunks_mut(w)
        .zip(jac.d_azimuth.par_chunks_mut(w))
        .zip(jac.d_elevation.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((cover, da), de))| {
            render_row(y, &rows[y], &tris, cam.width, s, cover, Some((da, de)));
        });
    (img, Some(jac))
}

/// Differentiable silhouette: each pixel is the probabilistic union of
/// `sigmoid(sharpness * signed_distance)` over all faces.
///
/// `sharpness` is per pixel at 128 pixels of width and is rescaled for other
/// widths. Faces with a vertex at or in front of the near plane, or at or
/// beyond the far plane, are left out.
pub fn soft_silhouette(mesh: &TriangleMesh, vp: &Viewpoint, cam: &CameraModel, sharpness: f64) -> SilhouetteImage {
    render(mesh, vp, cam, sharpness, false).0
}

/// [`soft_silhouette`] plus its exact derivatives with respect to the pose.
pub fn soft_silhouette_with_jacobian(
    mesh: &TriangleMesh,
    vp: &Viewpoint,
    cam: &CameraModel,
    sharpness: f64,
) -> (SilhouetteImage, SoftJacobian) {
    let (img, jac) = render(mesh, vp, cam, sharpness, true);
    (img, jac.expect("jacobian requested"))
}
