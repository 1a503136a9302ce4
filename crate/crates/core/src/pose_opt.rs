//! Viewpoint refinement by gradient descent on silhouette discrepancy.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, TriangleMesh, Viewpoint};
use crate::rasterizer::{rasterize_silhouette, soft_silhouette, soft_silhouette_with_jacobian, SilhouetteImage};

/// Silhouette gradients only come from pixels near an edge, and a 0.5° step
/// per unit of normalized gradient barely moves the pose. This rate, with the
/// step cap, reaches a 20° offset in a few dozen steps.
pub const DEFAULT_LEARNING_RATE: f64 = 3000.0;

/// Softer than the rendering default so poses far from the target still see
/// a gradient through the wider sigmoid band.
pub const DEFAULT_POSE_SHARPNESS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    FiniteDifference,
    SoftAnalytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_steps: usize,
    /// Degrees moved per unit of pixel-count-normalized gradient.
    pub learning_rate: f64,
    pub gradient_method: GradientMethod,
    pub fd_step_deg: f64,
    pub sharpness: f64,
    /// Stop once the soft loss, divided by pixel count, changes by less than this.
    pub convergence_tol: f64,
    /// Upper bound on the length of one update, in degrees.
    pub max_step_deg: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            max_steps: 100,
            learning_rate: DEFAULT_LEARNING_RATE,
            gradient_method: GradientMethod::SoftAnalytic,
            fd_step_deg: 0.5,
            sharpness: DEFAULT_POSE_SHARPNESS,
            convergence_tol: 1e-6,
            max_step_deg: 5.0,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.fd_step_deg > 0.0 && self.fd_step_deg <= 5.0) {
            return Err(Error::invalid(format!("fd_step_deg must lie in (0, 5], got {}", self.fd_step_deg)));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::invalid(format!("sharpness must be positive, got {}", self.sharpness)));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::invalid("convergence_tol must be nonnegative"));
        }
        if !(self.max_step_deg > 0.0) {
            return Err(Error::invalid("max_step_deg must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub viewpoint: Viewpoint,
    /// Hard-silhouette loss at `viewpoint`.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub steps: Vec<TraceStep>,
    pub best_viewpoint: Viewpoint,
    pub best_loss: f64,
    /// Whether the loss settled before `max_steps` ran out.
    pub converged: bool,
}

impl OptimizationTrace {
    /// `step,azimuth_deg,elevation_deg,loss`, one row per visited pose.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,azimuth_deg,elevation_deg,loss\n");
        for s in &self.steps {
            let _ = writeln!(out, "{},{},{},{}", s.step, s.viewpoint.azimuth_deg(), s.viewpoint.elevation_deg(), s.loss);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Sum of squared per-pixel differences.
pub fn silhouette_loss(target: &SilhouetteImage, rendered: &SilhouetteImage) -> Result<f64> {
    if !target.same_dims(rendered) {
        return Err(Error::Dimension(format!(
            "target is {}x{}, render is {}x{}",
            target.width, target.height, rendered.width, rendered.height
        )));
    }
    Ok(target.values.iter().zip(&rendered.values).map(|(s, r)| (s - r) * (s - r)).sum())
}

fn check_target(target: &SilhouetteImage, cam: &CameraModel) -> Result<()> {
    if target.width != cam.width || target.height != cam.height {
        return Err(Error::Dimension(format!(
            "target is {}x{}, camera renders {}x{}",
            target.width, target.height, cam.width, cam.height
        )));
    }
    Ok(())
}

/// Soft loss at `vp` and its gradient `(dL/d_azimuth, dL/d_elevation)` per degree.
fn soft_loss_and_gradient(
    mesh: &TriangleMesh,
    vp: &Viewpoint,
    cam: &CameraModel,
    target: &SilhouetteImage,
    settings: &OptimizerSettings,
) -> (f64, [f64; 2]) {
    let soft_loss = |v: Viewpoint| {
        let r = soft_silhouette(mesh, &v, cam, settings.sharpness);
        target.values.iter().zip(&r.values).map(|(s, r)| (s - r) * (s - r)).sum::<f64>()
    };
    match settings.gradient_method {
        GradientMethod::SoftAnalytic => {
            let (r, jac) = soft_silhouette_with_jacobian(mesh, vp, cam, settings.sharpness);
            let mut loss = 0.0;
            let mut g = [0.0; 2];
            for i in 0..r.values.len() {
                let diff = r.values[i] - target.values[i];
                loss += diff * diff;
                g[0] += 2.0 * diff * jac.d_azimuth[i];
                g[1] += 2.0 * diff * jac.d_elevation[i];
            }
            (loss, g)
        }
        GradientMethod::FiniteDifference => {
            let h = settings.fd_step_deg;
            let (az, el) = (vp.azimuth_deg(), vp.elevation_deg());
            let shifted = |da: f64, de: f64| soft_loss(Viewpoint::new(az + da, el + de));
            let g = [
                (shifted(h, 0.0) - shifted(-h, 0.0)) / (2.0 * h),
                (shifted(0.0, h) - shifted(0.0, -h)) / (2.0 * h),
            ];
            (soft_loss(*vp), g)
        }
    }
}

/// Gradient of the soft silhouette loss with respect to azimuth and
/// elevation, per degree.
pub fn pose_gradient(
    mesh: &TriangleMesh,
    vp: &Viewpoint,
    cam: &CameraModel,
    target: &SilhouetteImage,
    settings: &OptimizerSettings,
) -> Result<(f64, f64)> {
    check_target(target, cam)?;
    let (_, g) = soft_loss_and_gradient(mesh, vp, cam, target, settings);
    Ok((g[0], g[1]))
}

/// Gradient descent on the soft loss, ranked by the hard loss.
///
/// Each update moves the pose by `learning_rate * gradient / pixel_count`,
/// capped at `max_step_deg`. The returned best pose is the visited pose with
/// the lowest hard-silhouette loss, so it is never worse than `vp_init`.
pub fn finetune_viewpoint(
    mesh: &TriangleMesh,
    target: &SilhouetteImage,
    vp_init: &Viewpoint,
    cam: &CameraModel,
    settings: &OptimizerSettings,
) -> Result<OptimizationTrace> {
    settings.validate()?;
    check_target(target, cam)?;
    let n = cam.pixel_count() as f64;
    let hard_loss = |v: &Viewpoint| silhouette_loss(target, &rasterize_silhouette(mesh, v, cam));

    let mut vp = *vp_init;
    let first = hard_loss(&vp)?;
    let mut steps = vec![TraceStep { step: 0, viewpoint: vp, loss: first }];
    let (mut best_viewpoint, mut best_loss) = (vp, first);
    let mut converged = false;
    let mut prev_soft: Option<f64> = None;

    for step in 1..=settings.max_steps {
        let (soft, g) = soft_loss_and_gradient(mesh, &vp, cam, target, settings);
        if !soft.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("loss or gradient diverged at step {step}")));
        }
        if let Some(prev) = prev_soft {
            if ((prev - soft) / n).abs() < settings.convergence_tol {
                converged = true;
                break;
            }
        }
        prev_soft = Some(soft);
        let mut delta = [settings.learning_rate * g[0] / n, settings.learning_rate * g[1] / n];
        let len = delta[0].hypot(delta[1]);
        if len == 0.0 {
            converged = true;
            break;
        }
        if len > settings.max_step_deg {
            delta = delta.map(|d| d * settings.max_step_deg / len);
        }
        vp = Viewpoint::new(vp.azimuth_deg() - delta[0], vp.elevation_deg() - delta[1]);
        let loss = hard_loss(&vp)?;
        steps.push(TraceStep { step, viewpoint: vp, loss });
        if loss < best_loss {
            best_loss = loss;
            best_viewpoint = vp;
        }
    }
    Ok(OptimizationTrace { steps, best_viewpoint, best_loss, converged })
}
