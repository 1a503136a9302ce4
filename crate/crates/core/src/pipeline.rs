//! Batch runner: mesh, fine-tune, transfer, project and score every scene of
//! a manifest, with any stage optionally replaced by its ground truth.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{decode_viewpoint_bins, BinDistribution, CameraModel, TriangleMesh, Viewpoint, VoxelGrid};
use crate::isosurface::{marching_cubes, DEFAULT_ISO};
use crate::json::{read_json, write_json};
use crate::pose_opt::{finetune_viewpoint, silhouette_loss, OptimizerSettings};
use crate::project_eval::{
    bbox_from_silhouette, evaluate_dataset_weighted, project_keypoints_with_visibility, EvalRecord, EvalReport,
    GroundTruthKeypoint, ThresholdMode, Weighting, DEFAULT_ALPHA, DEFAULT_DEPTH_EPS,
};
use crate::rasterizer::{rasterize_silhouette, SilhouetteImage};
use crate::transfer::{transfer_from_database, DenseEmbedding, EmbeddingDatabase, KeypointSet, NnMode};

/// One scene. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub id: String,
    /// Predicted occupancy grid (VOXF).
    pub voxels: PathBuf,
    /// Target silhouette (PGM) the pose is fitted to.
    pub silhouette: PathBuf,
    /// Either a bin distribution or an explicit initial viewpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewpoint_distribution: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_viewpoint: Option<Viewpoint>,
    /// Dense embedding of the predicted mesh.
    pub dense_embedding: PathBuf,
    /// Semantic database searched by default.
    pub database: PathBuf,
    /// Keypoint set whose visible entries carry the ground-truth pixels.
    pub gt_keypoints: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mesh: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_dense_embedding: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_viewpoint: Option<Viewpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_database: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenes: Vec<SceneSpec>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Ground-truth substitutions for individual stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSwap {
    /// Ground-truth mesh and its dense embedding instead of the meshed prediction.
    pub use_gt_shape: bool,
    /// Ground-truth pose instead of the fine-tuned estimate.
    pub use_gt_viewpoint: bool,
    /// The scene's own annotated model instead of the library database.
    pub use_gt_semantic_model: bool,
}

impl StageSwap {
    pub const NONE: StageSwap = StageSwap { use_gt_shape: false, use_gt_viewpoint: false, use_gt_semantic_model: false };
    pub const ALL: StageSwap = StageSwap { use_gt_shape: true, use_gt_viewpoint: true, use_gt_semantic_model: true };

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.use_gt_shape {
            parts.push("shape");
        }
        if self.use_gt_viewpoint {
            parts.push("viewpoint");
        }
        if self.use_gt_semantic_model {
            parts.push("semantic-model");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            format!("gt:{}", parts.join("+"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Relative to the config file's directory.
    pub manifest: PathBuf,
    pub camera: CameraModel,
    pub optimizer: OptimizerSettings,
    pub iso: f64,
    pub alphas: Vec<f64>,
    pub mode: ThresholdMode,
    pub weighting: Weighting,
    pub nn_mode: NnMode,
    pub brute_force: bool,
    pub depth_eps: f64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub swap: StageSwap,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: PathBuf::from("manifest.json"),
            camera: CameraModel::default(),
            optimizer: OptimizerSettings::default(),
            iso: DEFAULT_ISO,
            alphas: vec![DEFAULT_ALPHA],
            mode: ThresholdMode::Img,
            weighting: Weighting::Keypoint,
            nn_mode: NnMode::Mean,
            brute_force: false,
            depth_eps: DEFAULT_DEPTH_EPS,
            jobs: 0,
            swap: StageSwap::NONE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.optimizer.validate()?;
        if !self.iso.is_finite() {
            return Err(Error::invalid("iso must be finite"));
        }
        if self.alphas.is_empty() {
            return Err(Error::invalid("at least one alpha is required"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!("alpha must be positive, got {a}")));
        }
        if !(self.depth_eps >= 0.0 && self.depth_eps.is_finite()) {
            return Err(Error::invalid("depth_eps must be nonnegative"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config: PipelineConfig = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOutcome {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_viewpoint: Option<Viewpoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_viewpoint: Option<Viewpoint>,
    /// Largest per-angle difference to the ground-truth pose, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viewpoint_error_deg: Option<f64>,
    /// Hard silhouette loss at the final pose.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silhouette_loss: Option<f64>,
    pub optimizer_steps: usize,
    /// Semantic ids dropped because their mean embedding vanished.
    pub excluded_ids: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// The full configuration, defaults included.
    pub config: PipelineConfig,
    pub swap_label: String,
    pub scenes: Vec<SceneOutcome>,
    pub failed: usize,
    /// One report per alpha, in config order.
    pub evaluations: Vec<EvalReport>,
}

impl PipelineReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn records(&self) -> Vec<EvalRecord> {
        self.scenes.iter().filter_map(|s| s.record.clone()).collect()
    }

    pub fn to_text_table(&self) -> String {
        let mut out = format!("configuration: {}\nscenes: {} ({} failed)\n", self.swap_label, self.scenes.len(), self.failed);
        for e in &self.evaluations {
            out.push('\n');
            out.push_str(&e.to_text_table());
        }
        out
    }
}

/// Runs every scene of the manifest named by `config`. Paths in the config
/// resolve against `base_dir`. Scene failures are recorded in the report and
/// do not stop the run.
pub fn run_pipeline(config: &PipelineConfig, base_dir: &Path) -> Result<PipelineReport> {
    config.validate()?;
    let manifest_path = base_dir.join(&config.manifest);
    let manifest = Manifest::load(&manifest_path)?;
    if manifest.scenes.is_empty() {
        return Err(Error::invalid("empty manifest"));
    }
    let scene_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    for spec in &manifest.scenes {
        check_paths(spec, &scene_dir, &config.swap)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let scenes: Vec<SceneOutcome> = pool.install(|| {
        manifest
            .scenes
            .par_iter()
            .map(|spec| match run_scene(spec, &scene_dir, config) {
                Ok(outcome) => outcome,
                Err(e) => {
                    log::error!("scene {}: {e}", spec.id);
                    SceneOutcome {
                        id: spec.id.clone(),
                        error: Some(e.to_string()),
                        initial_viewpoint: None,
                        final_viewpoint: None,
                        viewpoint_error_deg: None,
                        silhouette_loss: None,
                        optimizer_steps: 0,
                        excluded_ids: Vec::new(),
                        record: None,
                    }
                }
            })
            .collect()
    });

    let failed = scenes.iter().filter(|s| s.error.is_some()).count();
    let records: Vec<EvalRecord> = scenes.iter().filter_map(|s| s.record.clone()).collect();
    let evaluations = if records.is_empty() {
        Vec::new()
    } else {
        config
            .alphas
            .iter()
            .map(|&a| evaluate_dataset_weighted(&records, a, config.mode, config.weighting))
            .collect::<Result<_>>()?
    };
    Ok(PipelineReport { config: config.clone(), swap_label: config.swap.label(), scenes, failed, evaluations })
}

fn check_paths(spec: &SceneSpec, dir: &Path, swap: &StageSwap) -> Result<()> {
    let missing = |what: &str| Error::invalid(format!("scene {}: no {what} given", spec.id));
    let mut required: Vec<&Path> = vec![&spec.silhouette, &spec.gt_keypoints];
    if swap.use_gt_shape {
        required.push(spec.gt_mesh.as_deref().ok_or_else(|| missing("gt_mesh"))?);
        required.push(spec.gt_dense_embedding.as_deref().ok_or_else(|| missing("gt_dense_embedding"))?);
    } else {
        required.push(&spec.voxels);
        required.push(&spec.dense_embedding);
    }
    if swap.use_gt_viewpoint {
        spec.gt_viewpoint.ok_or_else(|| missing("gt_viewpoint"))?;
    } else if let Some(p) = &spec.viewpoint_distribution {
        required.push(p);
    } else if spec.initial_viewpoint.is_none() {
        return Err(missing("viewpoint_distribution or initial_viewpoint"));
    }
    if swap.use_gt_semantic_model {
        required.push(spec.gt_database.as_deref().ok_or_else(|| missing("gt_database"))?);
    } else {
        required.push(&spec.database);
    }
    for p in required {
        let full = dir.join(p);
        if !full.exists() {
            return Err(Error::io(&full, std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist")));
        }
    }
    Ok(())
}

/// Initial pose from an explicit viewpoint or the argmax bins of a distribution.
pub fn initial_viewpoint(spec: &SceneSpec, dir: &Path) -> Result<Viewpoint> {
    if let Some(vp) = spec.initial_viewpoint {
        return Ok(vp);
    }
    let path = spec.viewpoint_distribution.as_ref().ok_or_else(|| Error::invalid("no initial viewpoint"))?;
    let dist: BinDistribution = read_json(&dir.join(path))?;
    dist.validate()?;
    let (a, e) = dist.argmax();
    Ok(decode_viewpoint_bins(a, e))
}

fn run_scene(spec: &SceneSpec, dir: &Path, config: &PipelineConfig) -> Result<SceneOutcome> {
    let swap = &config.swap;
    let cam = &config.camera;
    let path = |p: &Path| dir.join(p);

    let (mesh, dense_path) = if swap.use_gt_shape {
        let gt_mesh = spec.gt_mesh.as_deref().expect("checked");
        (TriangleMesh::read_obj(&path(gt_mesh))?, spec.gt_dense_embedding.as_deref().expect("checked"))
    } else {
        let grid = VoxelGrid::read(&path(&spec.voxels))?;
        (marching_cubes(&grid, config.iso)?, spec.dense_embedding.as_path())
    };
    if mesh.is_empty() {
        return Err(Error::invalid("mesh is empty"));
    }

    let target = SilhouetteImage::read_pgm(&path(&spec.silhouette))?;
    if target.width != cam.width || target.height != cam.height {
        return Err(Error::Dimension(format!(
            "silhouette is {}x{} but the camera renders {}x{}",
            target.width, target.height, cam.width, cam.height
        )));
    }

    let (initial, vp, steps) = if swap.use_gt_viewpoint {
        let vp = spec.gt_viewpoint.expect("checked");
        (None, vp, 0)
    } else {
        let init = initial_viewpoint(spec, dir)?;
        let trace = finetune_viewpoint(&mesh, &target, &init, cam, &config.optimizer)?;
        (Some(init), trace.best_viewpoint, trace.steps.len())
    };
    let loss = silhouette_loss(&target, &rasterize_silhouette(&mesh, &vp, cam))?;

    let dense = DenseEmbedding::load(&path(dense_path))?;
    let db_path = if swap.use_gt_semantic_model { spec.gt_database.as_deref().expect("checked") } else { &spec.database };
    let db = EmbeddingDatabase::load(&path(db_path))?;
    let (transferred, excluded) = transfer_from_database(&dense, &db, config.nn_mode, config.brute_force)?;
    let predicted = project_keypoints_with_visibility(&transferred, &mesh, &vp, cam, config.depth_eps)?;

    let gt = KeypointSet::load(&path(&spec.gt_keypoints))?;
    let ground_truth: Vec<GroundTruthKeypoint> = gt
        .keypoints
        .iter()
        .filter(|k| k.visible == Some(true))
        .filter_map(|k| k.pixel.map(|pixel| GroundTruthKeypoint { semantic_id: k.semantic_id, pixel }))
        .collect();
    let bbox = bbox_from_silhouette(&target)?;
    let record = EvalRecord {
        image_id: spec.id.clone(),
        predicted,
        ground_truth,
        image_width: cam.width,
        image_height: cam.height,
        bbox_width: bbox.width,
        bbox_height: bbox.height,
    };
    record.validate()?;
    for id in &excluded {
        log::warn!("scene {}: semantic id {id} has a zero mean embedding and was skipped", spec.id);
    }
    Ok(SceneOutcome {
        id: spec.id.clone(),
        error: None,
        initial_viewpoint: initial,
        final_viewpoint: Some(vp),
        viewpoint_error_deg: spec.gt_viewpoint.map(|gt| gt.angular_error(&vp)),
        silhouette_loss: Some(loss),
        optimizer_steps: steps,
        excluded_ids: excluded,
        record: Some(record),
    })
}
