//! Synthetic scene corpus for end-to-end runs.
//!
//! Three categories (wedge, box, ellipsoid) are defined in a canonical frame
//! with annotated keypoints. A model instance is the canonical shape scaled
//! per axis. Embeddings are a fixed random-Fourier-feature map of canonical
//! coordinates, so nearby parts of different instances embed nearby and the
//! nearest-neighbour transfer recovers semantics up to the injected noise.
//!
//! Each scene gets a ground-truth instance, pose and silhouette, plus
//! "predicted" inputs degraded in three independent ways: a rescaled and
//! noisy occupancy grid, a pose distribution peaked at a perturbed pose, and
//! a library database built from other instances with noisy embeddings.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{convex_planes, ramp_grid, wedge_mesh};
use crate::error::{Error, Result};
use crate::geometry::{BinDistribution, CameraModel, TriangleMesh, Vec3, Viewpoint, VoxelGrid};
use crate::isosurface::{marching_cubes, sample_surface_points, SurfaceSample, DEFAULT_ISO};
use crate::json::write_json;
use crate::pipeline::{Manifest, PipelineConfig, SceneSpec};
use crate::pose_opt::OptimizerSettings;
use crate::project_eval::{project_keypoints_with_visibility, DEFAULT_DEPTH_EPS};
use crate::rasterizer::{rasterize_silhouette, SilhouetteImage};
use crate::transfer::{DenseEmbedding, EmbeddingDatabase, EmbeddingEntry, Keypoint, KeypointSet, ModelKeypoints};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusParams {
    pub seed: u64,
    pub scenes: usize,
    /// Square image size of silhouettes and of the emitted pipeline config.
    pub resolution: u32,
    pub grid_size: usize,
    pub dense_samples: usize,
    pub embedding_dim: usize,
    /// Angular frequency scale of the feature map, per canonical unit.
    pub embedding_bandwidth: f64,
    /// Instances per category in the library database.
    pub library_models: usize,
    /// Standard deviation of the canonical offset of library keypoints.
    pub semantic_offset: f64,
    /// Expected norm of the noise added to library embeddings.
    pub embedding_noise: f64,
    /// Expected norm of the noise added to dense embeddings.
    pub dense_noise: f64,
    /// Standard deviation of the relative per-axis scale error of predicted grids.
    pub voxel_scale_noise: f64,
    /// Half-width of the uniform noise added to predicted occupancies.
    pub voxel_occupancy_noise: f64,
    /// Standard deviation of the pose the predicted bin distribution peaks at.
    pub pose_noise_deg: f64,
    pub distribution_decay: f64,
    /// Ground-truth elevations are drawn from `[-e, e]`.
    pub elevation_range_deg: f64,
    /// Per-axis scale of instances is drawn from `[1 - v, 1 + v]`.
    pub shape_variation: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            seed: 0,
            scenes: 20,
            resolution: 64,
            grid_size: 32,
            dense_samples: 1500,
            embedding_dim: 64,
            embedding_bandwidth: 6.0,
            library_models: 4,
            semantic_offset: 0.14,
            embedding_noise: 0.4,
            dense_noise: 0.02,
            voxel_scale_noise: 0.18,
            voxel_occupancy_noise: 0.25,
            pose_noise_deg: 20.0,
            distribution_decay: 0.5,
            elevation_range_deg: 45.0,
            shape_variation: 0.15,
        }
    }
}

impl CorpusParams {
    /// Sets the library embedding noise and scales the dense noise with it,
    /// keeping their default ratio. Zero gives exact dense embeddings.
    pub fn with_embedding_noise(mut self, noise: f64) -> Self {
        let d = CorpusParams::default();
        self.dense_noise = noise * d.dense_noise / d.embedding_noise;
        self.embedding_noise = noise;
        self
    }

    /// Removes every source of embedding noise.
    pub fn noise_free_embeddings(mut self) -> Self {
        self.semantic_offset = 0.0;
        self.embedding_noise = 0.0;
        self.dense_noise = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 || self.resolution == 0 || self.dense_samples == 0 || self.embedding_dim == 0 {
            return Err(Error::invalid("scene count, resolution, sample count and dimension must be at least 1"));
        }
        if self.grid_size < 8 {
            return Err(Error::invalid("grid_size must be at least 8"));
        }
        if self.library_models == 0 {
            return Err(Error::invalid("library_models must be at least 1"));
        }
        let noise = [
            self.embedding_bandwidth,
            self.semantic_offset,
            self.embedding_noise,
            self.dense_noise,
            self.voxel_scale_noise,
            self.voxel_occupancy_noise,
            self.pose_noise_deg,
            self.elevation_range_deg,
            self.shape_variation,
        ];
        if noise.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("noise levels must be finite and nonnegative"));
        }
        if !(self.distribution_decay > 0.0 && self.distribution_decay < 1.0) {
            return Err(Error::invalid("distribution_decay must lie in (0, 1)"));
        }
        if self.shape_variation >= 0.5 || self.elevation_range_deg > 90.0 {
            return Err(Error::invalid("shape_variation must be below 0.5 and elevation_range_deg at most 90"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Wedge,
    Box,
    Ellipsoid,
}

const BOX_HALF: [f64; 3] = [0.26, 0.18, 0.13];
const ELLIPSOID_RADII: [f64; 3] = [0.30, 0.22, 0.16];

impl Category {
    pub const ALL: [Category; 3] = [Category::Wedge, Category::Box, Category::Ellipsoid];

    pub fn name(&self) -> &'static str {
        match self {
            Category::Wedge => "wedge",
            Category::Box => "box",
            Category::Ellipsoid => "ellipsoid",
        }
    }

    /// Semantic ids of different categories never collide.
    fn id_base(&self) -> u32 {
        match self {
            Category::Wedge => 0,
            Category::Box => 100,
            Category::Ellipsoid => 200,
        }
    }

    /// Approximate signed distance in the canonical frame, positive inside.
    fn canonical_inside(&self, c: Vec3) -> f64 {
        match self {
            Category::Wedge => {
                wedge_planes().iter().map(|(n, d)| d - n.dot(&c)).fold(f64::INFINITY, f64::min)
            }
            Category::Box => (BOX_HALF[0] - c.x.abs()).min(BOX_HALF[1] - c.y.abs()).min(BOX_HALF[2] - c.z.abs()),
            Category::Ellipsoid => {
                let r = ELLIPSOID_RADII;
                let q = Vec3::new(c.x / r[0], c.y / r[1], c.z / r[2]).norm();
                (1.0 - q) * r[2]
            }
        }
    }

    /// Annotated keypoints in the canonical frame.
    pub fn canonical_keypoints(&self) -> Vec<(u32, Vec3)> {
        let points: Vec<Vec3> = match self {
            Category::Wedge => {
                // corners, edge midpoints and the two end-face centres
                let v = wedge_mesh().vertices;
                let mut p = v.clone();
                p.extend((0..3).map(|k| (v[k] + v[k + 3]) / 2.0));
                for end in [0, 3] {
                    p.extend((0..3).map(|k| (v[end + k] + v[end + (k + 1) % 3]) / 2.0));
                    p.push((v[end] + v[end + 1] + v[end + 2]) / 3.0);
                }
                p
            }
            Category::Box => {
                // corners, edge midpoints and face centres
                let half = Vec3::from(BOX_HALF);
                let mut p = Vec::new();
                for sx in [-1.0, 0.0, 1.0] {
                    for sy in [-1.0, 0.0, 1.0] {
                        for sz in [-1.0, 0.0, 1.0] {
                            if (sx, sy, sz) != (0.0, 0.0, 0.0) {
                                p.push(Vec3::new(sx, sy, sz).component_mul(&half));
                            }
                        }
                    }
                }
                p
            }
            Category::Ellipsoid => {
                // poles, octant diagonals and four points between the x and z poles
                let r = Vec3::from(ELLIPSOID_RADII);
                let mut dirs = vec![Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()];
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        for sz in [-1.0, 1.0] {
                            dirs.push(Vec3::new(sx, sy, sz).normalize());
                        }
                    }
                }
                for (sx, sz) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                    dirs.push(Vec3::new(sx, 0.0, sz).normalize());
                }
                dirs.into_iter().map(|d| d.component_mul(&r)).collect()
            }
        };
        points.into_iter().enumerate().map(|(i, p)| (self.id_base() + i as u32, p)).collect()
    }
}

fn wedge_planes() -> &'static [(Vec3, f64)] {
    static PLANES: std::sync::OnceLock<Vec<(Vec3, f64)>> = std::sync::OnceLock::new();
    PLANES.get_or_init(|| convex_planes(&wedge_mesh()))
}

/// Unit-norm random Fourier features of canonical positions.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    frequencies: Vec<Vec3>,
    phases: Vec<f64>,
}

impl FeatureMap {
    pub fn new(dim: usize, bandwidth: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let frequencies = (0..dim)
            .map(|_| Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)) * bandwidth)
            .collect();
        let phases = (0..dim).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        FeatureMap { frequencies, phases }
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn embed(&self, c: &Vec3) -> Vec<f64> {
        let mut v: Vec<f64> = self.frequencies.iter().zip(&self.phases).map(|(w, b)| (w.dot(c) + b).cos()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    /// Embedding plus isotropic noise of expected norm `noise`, renormalized.
    fn embed_noisy(&self, c: &Vec3, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = self.embed(c);
        if noise > 0.0 {
            let normal = Normal::new(0.0, noise / (v.len() as f64).sqrt()).expect("finite sigma");
            v.iter_mut().for_each(|x| *x += normal.sample(rng));
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }
}

/// Barycentric weights of the point of triangle `abc` closest to `p`.
pub fn closest_point_barycentric(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

/// Surface point of `mesh` closest to `p`; ties go to the lowest face.
pub fn closest_surface_point(mesh: &TriangleMesh, p: &Vec3) -> Option<SurfaceSample> {
    let mut best: Option<(f64, SurfaceSample)> = None;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(f);
        let w = closest_point_barycentric(p, &a, &b, &c);
        let q = a * w[0] + b * w[1] + c * w[2];
        let d = (q - p).norm_squared();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, SurfaceSample { position: q, face_index: f, barycentric: w }));
        }
    }
    best.map(|(_, s)| s)
}

/// A scaled instance of a category, meshed from its occupancy grid.
#[derive(Debug, Clone)]
pub struct Instance {
    pub category: Category,
    pub scale: Vec3,
    pub grid: VoxelGrid,
    pub mesh: TriangleMesh,
    /// Annotated keypoints snapped onto the mesh.
    pub keypoints: Vec<(u32, SurfaceSample)>,
}

impl Instance {
    pub fn new(category: Category, scale: Vec3, grid_size: usize) -> Result<Self> {
        let grid = instance_grid(category, &scale, grid_size);
        let mesh = marching_cubes(&grid, DEFAULT_ISO)?;
        let keypoints = category
            .canonical_keypoints()
            .into_iter()
            .map(|(id, c)| {
                let s = closest_surface_point(&mesh, &c.component_mul(&scale))
                    .ok_or_else(|| Error::invalid(format!("{} instance has an empty mesh", category.name())))?;
                Ok((id, s))
            })
            .collect::<Result<_>>()?;
        Ok(Instance { category, scale, grid, mesh, keypoints })
    }

    pub fn canonical(&self, p: &Vec3) -> Vec3 {
        p.component_div(&self.scale)
    }

    pub fn keypoint_set(&self) -> KeypointSet {
        KeypointSet { keypoints: self.keypoints.iter().map(|(id, s)| Keypoint::new(*id, s.position)).collect() }
    }
}

fn instance_grid(category: Category, scale: &Vec3, n: usize) -> VoxelGrid {
    // the canonical distance shrinks by at most the smallest scale factor
    let m = scale.min();
    ramp_grid(n, |p| category.canonical_inside(p.component_div(scale)) * m)
}

fn random_scale(rng: &mut ChaCha8Rng, variation: f64) -> Vec3 {
    let mut draw = || if variation > 0.0 { rng.random_range(1.0 - variation..=1.0 + variation) } else { 1.0 };
    Vec3::new(draw(), draw(), draw())
}

/// Library database of one category: `models` instances with offset and noisy
/// keypoint embeddings.
fn library_database(category: Category, params: &CorpusParams, features: &FeatureMap, seed: u64) -> Result<EmbeddingDatabase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = Normal::new(0.0, params.semantic_offset.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut models = Vec::with_capacity(params.library_models);
    for m in 0..params.library_models {
        let inst = Instance::new(category, random_scale(&mut rng, params.shape_variation), params.grid_size)?;
        let keypoints = inst
            .keypoints
            .iter()
            .map(|(id, s)| {
                let mut c = inst.canonical(&s.position);
                if params.semantic_offset > 0.0 {
                    c += Vec3::new(offset.sample(&mut rng), offset.sample(&mut rng), offset.sample(&mut rng));
                }
                let embedding = features.embed_noisy(&c, params.embedding_noise, &mut rng);
                (*id, EmbeddingEntry { position: s.position, embedding })
            })
            .collect();
        models.push(ModelKeypoints { model_id: format!("{}_{m:02}", category.name()), keypoints });
    }
    EmbeddingDatabase::new(features.dim(), models)
}

/// The instance's own keypoints with noise-free embeddings.
fn own_database(inst: &Instance, model_id: &str, features: &FeatureMap) -> Result<EmbeddingDatabase> {
    let keypoints = inst
        .keypoints
        .iter()
        .map(|(id, s)| (*id, EmbeddingEntry { position: s.position, embedding: features.embed(&inst.canonical(&s.position)) }))
        .collect();
    EmbeddingDatabase::new(features.dim(), vec![ModelKeypoints { model_id: model_id.to_string(), keypoints }])
}

/// Dense embedding of `mesh` read in the canonical frame of `scale`. The
/// `extra` samples come first.
fn dense_embedding(
    mesh: &TriangleMesh,
    scale: &Vec3,
    extra: &[SurfaceSample],
    params: &CorpusParams,
    features: &FeatureMap,
    rng: &mut ChaCha8Rng,
) -> Result<DenseEmbedding> {
    let mut samples = extra.to_vec();
    samples.extend(sample_surface_points(mesh, params.dense_samples, rng.random())?);
    let embeddings =
        samples.iter().map(|s| features.embed_noisy(&s.position.component_div(scale), params.dense_noise, rng)).collect();
    DenseEmbedding::new(features.dim(), samples, embeddings)
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub id: String,
    pub category: Category,
    pub gt: Instance,
    pub gt_viewpoint: Viewpoint,
    pub silhouette: SilhouetteImage,
    pub predicted_grid: VoxelGrid,
    pub viewpoint_distribution: BinDistribution,
    /// Ground-truth keypoints with pixels and visibility at the true pose.
    pub gt_keypoints: KeypointSet,
    pub own_database: EmbeddingDatabase,
    pub dense_gt: DenseEmbedding,
    pub dense_predicted: DenseEmbedding,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub params: CorpusParams,
    pub camera: CameraModel,
    pub libraries: Vec<(Category, EmbeddingDatabase)>,
    pub scenes: Vec<Scene>,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn make_scene(i: usize, params: &CorpusParams, cam: &CameraModel, features: &FeatureMap) -> Result<Scene> {
    let mut rng = stream(params.seed, 1000 + i as u64);
    let category = Category::ALL[i % Category::ALL.len()];
    let id = format!("scene_{i:03}");
    let gt = Instance::new(category, random_scale(&mut rng, params.shape_variation), params.grid_size)?;

    let gt_viewpoint = Viewpoint::new(
        rng.random_range(0.0..360.0),
        if params.elevation_range_deg > 0.0 {
            rng.random_range(-params.elevation_range_deg..=params.elevation_range_deg)
        } else {
            0.0
        },
    );
    let silhouette = rasterize_silhouette(&gt.mesh, &gt_viewpoint, cam);
    let projected = project_keypoints_with_visibility(&gt.keypoint_set(), &gt.mesh, &gt_viewpoint, cam, DEFAULT_DEPTH_EPS)?;

    let pose_noise = Normal::new(0.0, params.pose_noise_deg.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let (da, de) = if params.pose_noise_deg > 0.0 {
        (pose_noise.sample(&mut rng), pose_noise.sample(&mut rng))
    } else {
        (0.0, 0.0)
    };
    let peak = Viewpoint::new(gt_viewpoint.azimuth_deg() + da, gt_viewpoint.elevation_deg() + de);
    let viewpoint_distribution = BinDistribution::peaked_at(&peak, params.distribution_decay);

    // predicted shape: mis-scaled and noisy occupancy
    let mut pred_scale = gt.scale;
    if params.voxel_scale_noise > 0.0 {
        let n = Normal::new(0.0, params.voxel_scale_noise).expect("finite sigma");
        for k in 0..3 {
            pred_scale[k] *= (1.0 + n.sample(&mut rng)).clamp(0.5, 1.5);
        }
    }
    let clean = instance_grid(category, &pred_scale, params.grid_size);
    let a = params.voxel_occupancy_noise;
    let values: Vec<f32> = clean
        .values()
        .iter()
        .map(|&v| if a > 0.0 { (v as f64 + rng.random_range(-a..=a)).clamp(0.0, 1.0) as f32 } else { v })
        .collect();
    let predicted_grid = VoxelGrid::new(clean.dims(), values)?;
    let predicted_mesh = marching_cubes(&predicted_grid, DEFAULT_ISO)?;

    let own = own_database(&gt, &id, features)?;
    let annotated: Vec<SurfaceSample> = gt.keypoints.iter().map(|(_, s)| *s).collect();
    let dense_gt = dense_embedding(&gt.mesh, &gt.scale, &annotated, params, features, &mut rng)?;
    let dense_predicted = dense_embedding(&predicted_mesh, &pred_scale, &[], params, features, &mut rng)?;

    Ok(Scene {
        id,
        category,
        gt,
        gt_viewpoint,
        silhouette,
        predicted_grid,
        viewpoint_distribution,
        gt_keypoints: projected,
        own_database: own,
        dense_gt,
        dense_predicted,
    })
}

/// Builds the whole corpus in memory. Identical parameters give identical output.
pub fn generate_corpus(params: &CorpusParams) -> Result<Corpus> {
    params.validate()?;
    let camera = CameraModel::with_resolution(params.resolution);
    let features = FeatureMap::new(params.embedding_dim, params.embedding_bandwidth, stream(params.seed, 1).random());
    let libraries = Category::ALL
        .par_iter()
        .enumerate()
        .map(|(k, &c)| Ok((c, library_database(c, params, &features, stream(params.seed, 2 + k as u64).random())?)))
        .collect::<Result<Vec<_>>>()?;
    let scenes = (0..params.scenes)
        .into_par_iter()
        .map(|i| make_scene(i, params, &camera, &features))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { params: params.clone(), camera, libraries, scenes })
}

impl Corpus {
    /// Writes every file, a manifest and a pipeline config into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("corpus.json"), &self.params)?;
        for (c, db) in &self.libraries {
            db.save(&dir.join(format!("library_{}.json", c.name())))?;
        }
        let mut manifest = Manifest::default();
        for s in &self.scenes {
            let rel = PathBuf::from(&s.id);
            let sd = dir.join(&rel);
            std::fs::create_dir_all(&sd).map_err(|e| Error::io(&sd, e))?;
            s.gt.grid.write(&sd.join("gt_voxels.voxf"))?;
            s.gt.mesh.write_obj(&sd.join("gt_mesh.obj"))?;
            s.predicted_grid.write(&sd.join("pred_voxels.voxf"))?;
            s.silhouette.write_pgm(&sd.join("silhouette.pgm"))?;
            write_json(&sd.join("viewpoint_distribution.json"), &s.viewpoint_distribution)?;
            write_json(&sd.join("gt_viewpoint.json"), &s.gt_viewpoint)?;
            s.gt_keypoints.save(&sd.join("gt_keypoints.json"))?;
            s.own_database.save(&sd.join("gt_database.json"))?;
            s.dense_gt.save(&sd.join("dense_gt.json"))?;
            s.dense_predicted.save(&sd.join("dense_pred.json"))?;
            manifest.scenes.push(SceneSpec {
                id: s.id.clone(),
                voxels: rel.join("pred_voxels.voxf"),
                silhouette: rel.join("silhouette.pgm"),
                viewpoint_distribution: Some(rel.join("viewpoint_distribution.json")),
                initial_viewpoint: None,
                dense_embedding: rel.join("dense_pred.json"),
                database: PathBuf::from(format!("library_{}.json", s.category.name())),
                gt_keypoints: rel.join("gt_keypoints.json"),
                gt_mesh: Some(rel.join("gt_mesh.obj")),
                gt_dense_embedding: Some(rel.join("dense_gt.json")),
                gt_viewpoint: Some(s.gt_viewpoint),
                gt_database: Some(rel.join("gt_database.json")),
            });
        }
        manifest.save(&dir.join("manifest.json"))?;
        config_for(&self.camera).save(&dir.join("pipeline.json"))
    }
}

/// Pipeline settings written next to a corpus. Meshes here are marching-cubes
/// output with initial poses a bin width or so off, where a sharper
/// rasterizer and fewer steps recover as well as the defaults at a fraction
/// of the cost.
pub fn config_for(camera: &CameraModel) -> PipelineConfig {
    PipelineConfig {
        camera: *camera,
        optimizer: OptimizerSettings { sharpness: 20.0, learning_rate: 1000.0, max_steps: 40, ..Default::default() },
        ..Default::default()
    }
}

/// Generates and writes a corpus.
pub fn make_corpus(dir: &Path, params: &CorpusParams) -> Result<Corpus> {
    let corpus = generate_corpus(params)?;
    corpus.write(dir)?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::{transfer_from_database, NnMode};

    fn small() -> CorpusParams {
        CorpusParams { scenes: 3, dense_samples: 300, grid_size: 24, library_models: 2, ..Default::default() }
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert_eq!(closest_point_barycentric(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c), [1.0, 0.0, 0.0]);
        assert_eq!(closest_point_barycentric(&Vec3::new(2.0, 0.0, 0.0), &a, &b, &c), [0.0, 1.0, 0.0]);
        assert_eq!(closest_point_barycentric(&Vec3::new(0.5, -1.0, 0.0), &a, &b, &c), [0.5, 0.5, 0.0]);
        let w = closest_point_barycentric(&Vec3::new(0.25, 0.25, 3.0), &a, &b, &c);
        let q = a * w[0] + b * w[1] + c * w[2];
        assert!((q - Vec3::new(0.25, 0.25, 0.0)).norm() < 1e-12);
        let w = closest_point_barycentric(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((w[1] - 0.5).abs() < 1e-12 && (w[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn feature_map_is_local() {
        let f = FeatureMap::new(64, 6.0, 3);
        let c = Vec3::new(0.1, -0.05, 0.02);
        let e = f.embed(&c);
        assert!((e.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let near = f.embed(&(c + Vec3::new(0.02, 0.0, 0.0)));
        let far = f.embed(&(c + Vec3::new(0.3, 0.0, 0.0)));
        assert!(dot(&e, &near) > dot(&e, &far));
    }

    #[test]
    fn instance_keypoints_lie_on_the_mesh_near_their_annotations() {
        for c in Category::ALL {
            let inst = Instance::new(c, Vec3::new(1.1, 0.9, 1.0), 32).unwrap();
            assert_eq!(inst.keypoints.len(), c.canonical_keypoints().len());
            for ((_, s), (_, a)) in inst.keypoints.iter().zip(c.canonical_keypoints()) {
                assert!((s.reconstruct(&inst.mesh) - s.position).norm() < 1e-12);
                // corners are rounded off by about a cell
                assert!((s.position - a.component_mul(&inst.scale)).norm() < 0.06, "{c:?}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = small();
        let a = generate_corpus(&p).unwrap();
        let b = generate_corpus(&p).unwrap();
        for (x, y) in a.scenes.iter().zip(&b.scenes) {
            assert_eq!(x.silhouette, y.silhouette);
            assert_eq!(x.predicted_grid, y.predicted_grid);
            assert_eq!(x.dense_predicted, y.dense_predicted);
            assert_eq!(x.gt_keypoints, y.gt_keypoints);
        }
        assert_eq!(a.libraries, b.libraries);
    }

    #[test]
    fn silhouettes_rerender_from_the_written_mesh() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = make_corpus(dir.path(), &small()).unwrap();
        for s in &corpus.scenes {
            let mesh = TriangleMesh::read_obj(&dir.path().join(&s.id).join("gt_mesh.obj")).unwrap();
            let img = rasterize_silhouette(&mesh, &s.gt_viewpoint, &corpus.camera);
            let agree = img.values.iter().zip(&s.silhouette.values).filter(|(a, b)| a == b).count();
            assert!(agree as f64 >= 0.99 * img.pixel_count() as f64);
            assert!(s.silhouette.foreground_count() > 0);
        }
    }

    #[test]
    fn noise_free_embeddings_transfer_exactly_onto_the_gt_mesh() {
        let corpus = generate_corpus(&small().noise_free_embeddings()).unwrap();
        for s in &corpus.scenes {
            let (kps, excluded) = transfer_from_database(&s.dense_gt, &s.own_database, NnMode::Mean, false).unwrap();
            assert!(excluded.is_empty());
            for (id, sample) in &s.gt.keypoints {
                assert_eq!(kps.get(*id).unwrap().position(), sample.position);
            }
        }
    }

    #[test]
    fn gt_keypoints_include_visible_ones() {
        let corpus = generate_corpus(&small()).unwrap();
        for s in &corpus.scenes {
            let visible = s.gt_keypoints.keypoints.iter().filter(|k| k.visible == Some(true)).count();
            assert!(visible >= 2, "{}: {visible}", s.id);
        }
    }
}
