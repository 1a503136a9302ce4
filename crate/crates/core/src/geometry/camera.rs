//! Camera convention.
//!
//! The camera sits on a sphere of radius `distance` around the origin.
//! Azimuth 0 lies on +X and grows toward +Y; elevation grows toward +Z. The
//! camera looks at the origin with its up vector as close to +Z as the look
//! direction allows. Camera space is x right, y down, z forward, so pixel
//! coordinates grow right and down from the top-left corner.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Azimuth/elevation pose in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ViewpointRepr", into = "ViewpointRepr")]
pub struct Viewpoint {
    azimuth_deg: f64,
    elevation_deg: f64,
}

impl Viewpoint {
    /// Wraps azimuth into `[0, 360)` and clamps elevation to `[-90, 90]`.
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Viewpoint {
            azimuth_deg: wrap_degrees(azimuth_deg),
            elevation_deg: elevation_deg.clamp(-90.0, 90.0),
        }
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation_deg
    }

    /// Largest of the circular azimuth difference and the elevation difference.
    pub fn angular_error(&self, other: &Viewpoint) -> f64 {
        let mut daz = (self.azimuth_deg - other.azimuth_deg).abs();
        if daz > 180.0 {
            daz = 360.0 - daz;
        }
        daz.max((self.elevation_deg - other.elevation_deg).abs())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewpointRepr {
    azimuth_deg: f64,
    elevation_deg: f64,
}

impl From<ViewpointRepr> for Viewpoint {
    fn from(r: ViewpointRepr) -> Self {
        Viewpoint::new(r.azimuth_deg, r.elevation_deg)
    }
}

impl From<Viewpoint> for ViewpointRepr {
    fn from(v: Viewpoint) -> Self {
        ViewpointRepr { azimuth_deg: v.azimuth_deg, elevation_deg: v.elevation_deg }
    }
}

fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid of a tiny negative value rounds up to exactly 360
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    pub distance: f64,
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel { distance: 2.0, fov_deg: 30.0, width: 128, height: 128, near: 0.1, far: 10.0 }
    }
}

impl CameraModel {
    pub fn new(distance: f64, fov_deg: f64, width: u32, height: u32, near: f64, far: f64) -> Result<Self> {
        let cam = CameraModel { distance, fov_deg, width, height, near, far };
        cam.validate()?;
        Ok(cam)
    }

    /// Default camera at a square resolution.
    pub fn with_resolution(resolution: u32) -> Self {
        CameraModel { width: resolution, height: resolution, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.near < self.distance && self.distance < self.far) {
            return Err(Error::invalid(format!(
                "camera requires 0 < near < distance < far, got near={} distance={} far={}",
                self.near, self.distance, self.far
            )));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::invalid(format!("fov must lie in (0, 180), got {}", self.fov_deg)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1"));
        }
        Ok(())
    }

    /// Focal length in pixels; the field of view is vertical.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_deg.to_radians()).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// World to camera transform `p_cam = rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_inverse(&self, q: &Vec3) -> Vec3 {
        self.rotation.transpose() * (q - self.translation)
    }

    /// Camera centre in world coordinates.
    pub fn origin(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Rows of the world-to-camera rotation: right, down, forward.
fn camera_axes(vp: &Viewpoint) -> [Vec3; 3] {
    let el = vp.elevation_deg;
    if el.abs() >= 90.0 {
        // Looking straight along Z: +X disambiguates "up".
        let s = el.signum();
        let forward = Vec3::new(0.0, 0.0, -s);
        let right = forward.cross(&Vec3::x()).normalize();
        let up = right.cross(&forward);
        return [right, -up, forward];
    }
    let (sa, ca) = vp.azimuth_deg.to_radians().sin_cos();
    let (se, ce) = el.to_radians().sin_cos();
    [Vec3::new(-sa, ca, 0.0), Vec3::new(ca * se, sa * se, -ce), Vec3::new(-ce * ca, -ce * sa, -se)]
}

pub fn view_to_camera_transform(vp: &Viewpoint, cam: &CameraModel) -> RigidTransform {
    let [right, down, forward] = camera_axes(vp);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    // All three axes are orthogonal to the camera centre except forward, which
    // points at the origin from distance `d`.
    RigidTransform { rotation, translation: Vec3::new(0.0, 0.0, cam.distance) }
}

/// Derivatives of the world-to-camera rotation with respect to azimuth and
/// elevation, per degree. The translation does not depend on either angle.
pub fn view_frame_derivatives(vp: &Viewpoint) -> (Matrix3<f64>, Matrix3<f64>) {
    let (sa, ca) = vp.azimuth_deg.to_radians().sin_cos();
    let (se, ce) = vp.elevation_deg.to_radians().sin_cos();
    let k = std::f64::consts::PI / 180.0;
    let d_az = Matrix3::new(-ca, -sa, 0.0, -sa * se, ca * se, 0.0, ce * sa, -ce * ca, 0.0) * k;
    let d_el = Matrix3::new(0.0, 0.0, 0.0, ca * ce, sa * ce, se, se * ca, se * sa, -ce) * k;
    (d_az, d_el)
}

/// Continuous pixel position plus depth along the camera forward axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

/// Perspective projection; `None` when the point is not in front of the near plane.
pub fn project_point(p: &Vec3, vp: &Viewpoint, cam: &CameraModel) -> Option<Projection> {
    let q = view_to_camera_transform(vp, cam).apply(p);
    if q.z <= cam.near {
        return None;
    }
    let f = cam.focal_px();
    let (cx, cy) = cam.principal_point();
    Some(Projection { x: cx + f * q.x / q.z, y: cy + f * q.y / q.z, depth: q.z })
}

/// Inverse of [`project_point`] for a known depth.
pub fn unproject_point(x: f64, y: f64, depth: f64, vp: &Viewpoint, cam: &CameraModel) -> Vec3 {
    let f = cam.focal_px();
    let (cx, cy) = cam.principal_point();
    let q = Vec3::new((x - cx) / f * depth, (y - cy) / f * depth, depth);
    view_to_camera_transform(vp, cam).apply_inverse(&q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraModel {
        CameraModel::default()
    }

    #[test]
    fn camera_positions_follow_convention() {
        let t = view_to_camera_transform(&Viewpoint::new(0.0, 0.0), &cam());
        assert!((t.origin() - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        // forward axis points back at the origin
        assert!((t.rotation.row(2).transpose() - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);

        let t = view_to_camera_transform(&Viewpoint::new(90.0, 0.0), &cam());
        assert!((t.origin() - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-12);

        let t = view_to_camera_transform(&Viewpoint::new(0.0, 90.0), &cam());
        assert!((t.origin() - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
        // singular pose uses +X as up, so the image "down" axis is -X
        assert!((t.rotation.row(1).transpose() + Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn rotation_is_proper_for_sampled_viewpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut vps: Vec<Viewpoint> = (0..500)
            .map(|_| Viewpoint::new(rng.random_range(-720.0..720.0), rng.random_range(-90.0..=90.0)))
            .collect();
        vps.push(Viewpoint::new(10.0, 90.0));
        vps.push(Viewpoint::new(10.0, -90.0));
        for vp in vps {
            let r = view_to_camera_transform(&vp, &cam()).rotation;
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            assert!(err < 1e-9, "{vp:?}: {err}");
            assert!((r.determinant() - 1.0).abs() < 1e-9);
            // up vector never points below the horizon
            assert!(-r[(1, 2)] >= -1e-12);
        }
    }

    #[test]
    fn origin_projects_to_image_centre() {
        let c = cam();
        for vp in [Viewpoint::new(0.0, 0.0), Viewpoint::new(123.0, -40.0), Viewpoint::new(300.0, 90.0)] {
            let p = project_point(&Vec3::zeros(), &vp, &c).unwrap();
            assert!((p.x - 64.0).abs() < 1e-9 && (p.y - 64.0).abs() < 1e-9);
            assert!((p.depth - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn camera_centre_is_behind_marker() {
        let vp = Viewpoint::new(30.0, 20.0);
        let c = cam();
        let centre = view_to_camera_transform(&vp, &c).origin();
        assert!(project_point(&centre, &vp, &c).is_none());
    }

    #[test]
    fn up_and_right_map_to_image_axes() {
        let c = cam();
        let vp = Viewpoint::new(0.0, 0.0);
        // from +X looking at the origin, +Y is to the right and +Z is up
        let p = project_point(&Vec3::new(0.0, 0.1, 0.0), &vp, &c).unwrap();
        assert!(p.x > 64.0 && (p.y - 64.0).abs() < 1e-9);
        let p = project_point(&Vec3::new(0.0, 0.0, 0.1), &vp, &c).unwrap();
        assert!(p.y < 64.0 && (p.x - 64.0).abs() < 1e-9);
    }

    #[test]
    fn project_unproject_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = cam();
        for _ in 0..1000 {
            let vp = Viewpoint::new(rng.random_range(0.0..360.0), rng.random_range(-89.0..89.0));
            let p = Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            let q = project_point(&p, &vp, &c).unwrap();
            let back = unproject_point(q.x, q.y, q.depth, &vp, &c);
            assert!((back - p).norm() < 1e-6);
        }
    }

    #[test]
    fn projection_invariant_to_full_turns() {
        let c = cam();
        let p = Vec3::new(0.2, -0.1, 0.3);
        for az in [0.0, 37.0, 181.5, 359.0] {
            let a = project_point(&p, &Viewpoint::new(az, 12.0), &c).unwrap();
            let b = project_point(&p, &Viewpoint::new(az + 360.0, 12.0), &c).unwrap();
            assert_eq!(a, b);
            let b = project_point(&p, &Viewpoint::new(az - 720.0, 12.0), &c).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn frame_derivatives_match_finite_differences() {
        let c = cam();
        let vp = Viewpoint::new(47.0, 23.0);
        let (d_az, d_el) = view_frame_derivatives(&vp);
        let h = 1e-5;
        let r = |az: f64, el: f64| view_to_camera_transform(&Viewpoint::new(az, el), &c).rotation;
        let fd_az = (r(47.0 + h, 23.0) - r(47.0 - h, 23.0)) / (2.0 * h);
        let fd_el = (r(47.0, 23.0 + h) - r(47.0, 23.0 - h)) / (2.0 * h);
        assert!((fd_az - d_az).abs().max() < 1e-8);
        assert!((fd_el - d_el).abs().max() < 1e-8);
    }

    #[test]
    fn viewpoint_canonicalises() {
        let vp = Viewpoint::new(-30.0, 120.0);
        assert_eq!(vp.azimuth_deg(), 330.0);
        assert_eq!(vp.elevation_deg(), 90.0);
        assert_eq!(Viewpoint::new(-1e-18, 0.0).azimuth_deg(), 0.0);
        assert_eq!(Viewpoint::new(720.0, -95.0), Viewpoint::new(0.0, -90.0));
    }

    #[test]
    fn viewpoint_json_round_trips_and_canonicalises() {
        let vp = Viewpoint::new(123.456789012345, -12.5);
        let text = serde_json::to_string(&vp).unwrap();
        assert_eq!(serde_json::from_str::<Viewpoint>(&text).unwrap(), vp);
        let wrapped: Viewpoint = serde_json::from_str(r#"{"azimuth_deg": 370.0, "elevation_deg": 95.0}"#).unwrap();
        assert_eq!(wrapped, Viewpoint::new(10.0, 90.0));
        assert!(serde_json::from_str::<Viewpoint>(r#"{"azimuth_deg": 1.0, "elevation_deg": 2.0, "roll": 0.0}"#).is_err());
    }

    #[test]
    fn invalid_cameras_rejected() {
        assert!(CameraModel::new(2.0, 30.0, 64, 64, 0.1, 10.0).is_ok());
        assert!(CameraModel::new(2.0, 30.0, 64, 64, 3.0, 10.0).is_err());
        assert!(CameraModel::new(2.0, 180.0, 64, 64, 0.1, 10.0).is_err());
        assert!(CameraModel::new(2.0, 30.0, 0, 64, 0.1, 10.0).is_err());
        assert!(CameraModel::new(2.0, 30.0, 64, 64, 0.1, 1.5).is_err());
    }
}
