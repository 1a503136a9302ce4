//! Keypoint projection with depth-buffer visibility, and PCK scoring.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraModel, TriangleMesh, Viewpoint};
use crate::rasterizer::{rasterize_depth, SilhouetteImage};
use crate::transfer::KeypointSet;

/// Tolerance factor used for every reported table.
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Slack added to the rendered depth before a keypoint counts as hidden.
pub const DEFAULT_DEPTH_EPS: f64 = 1e-3;

/// Projects keypoints and marks each visible iff it is in the image and no
/// rendered surface at its pixel lies in front of it by more than `depth_eps`.
pub fn project_keypoints_with_visibility(
    kps: &KeypointSet,
    mesh: &TriangleMesh,
    vp: &Viewpoint,
    cam: &CameraModel,
    depth_eps: f64,
) -> Result<KeypointSet> {
    if mesh.is_empty() {
        return Err(Error::invalid("visibility needs a non-empty mesh"));
    }
    let depth = rasterize_depth(mesh, vp, cam);
    let mut out = kps.clone();
    for k in &mut out.keypoints {
        let Some(p) = project_point(&k.position(), vp, cam) else {
            k.pixel = None;
            k.visible = Some(false);
            continue;
        };
        k.pixel = Some([p.x, p.y]);
        let (px, py) = (p.x.floor(), p.y.floor());
        let in_image = px >= 0.0 && py >= 0.0 && px < cam.width as f64 && py < cam.height as f64;
        let visible = in_image
            && match depth.get(px as u32, py as u32) {
                Some(d) => p.depth <= d + depth_eps,
                None => true,
            };
        k.visible = Some(visible);
    }
    Ok(out)
}

/// Correct iff the distance is at most `alpha * max(w, h)`.
pub fn pck_correct(k_pr: [f64; 2], k_gt: [f64; 2], alpha: f64, w: f64, h: f64) -> bool {
    let d = (k_pr[0] - k_gt[0]).hypot(k_pr[1] - k_gt[1]);
    d <= alpha * w.max(h)
}

/// Inclusive foreground bounds; width and height count pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

pub fn bbox_from_silhouette(s: &SilhouetteImage) -> Result<BoundingBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for y in 0..s.height {
        for x in 0..s.width {
            if s.get(x, y) >= 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == u32::MAX {
        return Err(Error::EmptyBoundingBox);
    }
    Ok(BoundingBox { x0, y0, width: x1 - x0 + 1, height: y1 - y0 + 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Img,
    Bbox,
}

impl std::fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ThresholdMode::Img => "img",
            ThresholdMode::Bbox => "bbox",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every (record, keypoint) pair counts once.
    #[default]
    Keypoint,
    /// Each record's own PCK counts once.
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthKeypoint {
    pub semantic_id: u32,
    pub pixel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub image_id: String,
    pub predicted: KeypointSet,
    pub ground_truth: Vec<GroundTruthKeypoint>,
    pub image_width: u32,
    pub image_height: u32,
    pub bbox_width: u32,
    pub bbox_height: u32,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("record {:?}: {m}", self.image_id)));
        if self.image_width == 0 || self.image_height == 0 || self.bbox_width == 0 || self.bbox_height == 0 {
            return bad("image and bbox sizes must be at least 1".into());
        }
        if self.bbox_width > self.image_width || self.bbox_height > self.image_height {
            return bad("bbox larger than the image".into());
        }
        let mut seen = HashSet::new();
        for gt in &self.ground_truth {
            if !seen.insert(gt.semantic_id) {
                return bad(format!("ground-truth id {} repeated", gt.semantic_id));
            }
        }
        self.predicted.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Coverage {
    pub records: usize,
    pub records_scored: usize,
    /// Records whose predictions share no id with their ground truth.
    pub unmatched_records: Vec<String>,
    /// Ground-truth keypoints with no predicted pixel, scored as incorrect.
    pub missing_predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub alpha: f64,
    pub mode: ThresholdMode,
    pub weighting: Weighting,
    pub per_id: BTreeMap<u32, f64>,
    pub mean: f64,
    pub num_keypoints: usize,
    pub coverage: Coverage,
}

/// Keypoint-weighted PCK over `records`.
pub fn evaluate_dataset(records: &[EvalRecord], alpha: f64, mode: ThresholdMode) -> Result<EvalReport> {
    evaluate_dataset_weighted(records, alpha, mode, Weighting::Keypoint)
}

pub fn evaluate_dataset_weighted(
    records: &[EvalRecord],
    alpha: f64,
    mode: ThresholdMode,
    weighting: Weighting,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::invalid("no records to evaluate"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let mut per_id: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut coverage = Coverage { records: records.len(), ..Default::default() };
    let (mut correct, mut total) = (0usize, 0usize);
    // image-weighted mean is accumulated from sorted per-record values so
    // record order cannot change the floating-point sum
    let mut record_scores = Vec::new();
    for r in records {
        r.validate()?;
        let matched = r.ground_truth.iter().filter(|g| r.predicted.get(g.semantic_id).is_some()).count();
        if matched == 0 {
            coverage.unmatched_records.push(r.image_id.clone());
            continue;
        }
        coverage.records_scored += 1;
        let (w, h) = match mode {
            ThresholdMode::Img => (r.image_width, r.image_height),
            ThresholdMode::Bbox => (r.bbox_width, r.bbox_height),
        };
        let mut rec_correct = 0;
        for g in &r.ground_truth {
            let hit = match r.predicted.get(g.semantic_id).and_then(|k| k.pixel) {
                Some(px) => pck_correct(px, g.pixel, alpha, w as f64, h as f64),
                None => {
                    coverage.missing_predictions += 1;
                    false
                }
            };
            let slot = per_id.entry(g.semantic_id).or_default();
            slot.1 += 1;
            if hit {
                slot.0 += 1;
                rec_correct += 1;
            }
        }
        correct += rec_correct;
        total += r.ground_truth.len();
        record_scores.push(rec_correct as f64 / r.ground_truth.len() as f64);
    }
    coverage.unmatched_records.sort();
    if total == 0 {
        return Err(Error::Coverage("no record shares a keypoint id with its predictions".into()));
    }
    let mean = match weighting {
        Weighting::Keypoint => correct as f64 / total as f64,
        Weighting::Image => {
            record_scores.sort_by(f64::total_cmp);
            record_scores.iter().sum::<f64>() / record_scores.len() as f64
        }
    };
    Ok(EvalReport {
        alpha,
        mode,
        weighting,
        per_id: per_id.into_iter().map(|(id, (c, n))| (id, c as f64 / n as f64)).collect(),
        mean,
        num_keypoints: total,
        coverage,
    })
}

impl EvalReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }

    /// One row per semantic id plus the mean, as percentages.
    pub fn to_text_table(&self) -> String {
        let header = format!("PCK (alpha_{}={})", self.mode, self.alpha);
        let width = header.len().max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} | {:>width$}", "keypoint", header);
        let _ = writeln!(out, "{}-+-{}", "-".repeat(12), "-".repeat(width));
        for (id, pck) in &self.per_id {
            let _ = writeln!(out, "{:<12} | {:>width$.1}", id, 100.0 * pck);
        }
        let _ = writeln!(out, "{}-+-{}", "-".repeat(12), "-".repeat(width));
        let _ = writeln!(out, "{:<12} | {:>width$.1}", "mean", 100.0 * self.mean);
        let _ = writeln!(out, "{:<12} | {:>width$}", "keypoints", self.num_keypoints);
        out
    }
}

pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<EvalRecord> = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| Error::Record { index: i, message: e.to_string() })?;
    }
    Ok(records)
}

/// Binary PPM: silhouette in grey, predicted keypoints as filled 3x3 red
/// squares, ground truth as 5x5 green outlines.
pub fn render_overlay(silhouette: &SilhouetteImage, predicted: &KeypointSet, ground_truth: &[GroundTruthKeypoint]) -> Vec<u8> {
    let (w, h) = (silhouette.width as i64, silhouette.height as i64);
    let mut rgb: Vec<[u8; 3]> = silhouette
        .values
        .iter()
        .map(|&v| {
            let g = 40 + (120.0 * v).round() as u8;
            [g, g, g]
        })
        .collect();
    let mut put = |x: i64, y: i64, c: [u8; 3]| {
        if x >= 0 && y >= 0 && x < w && y < h {
            rgb[(y * w + x) as usize] = c;
        }
    };
    for g in ground_truth {
        let (cx, cy) = (g.pixel[0].floor() as i64, g.pixel[1].floor() as i64);
        for d in -2..=2 {
            for (x, y) in [(cx + d, cy - 2), (cx + d, cy + 2), (cx - 2, cy + d), (cx + 2, cy + d)] {
                put(x, y, [0, 220, 0]);
            }
        }
    }
    for k in &predicted.keypoints {
        let Some(p) = k.pixel else { continue };
        let (cx, cy) = (p[0].floor() as i64, p[1].floor() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                put(cx + dx, cy + dy, [230, 30, 30]);
            }
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(rgb.iter().flatten());
    out
}
