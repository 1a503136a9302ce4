use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use semcycle::fixtures::{make_corpus, CorpusParams};
use semcycle::geometry::{decode_viewpoint_bins, BinDistribution, CameraModel, TriangleMesh, Viewpoint, VoxelGrid};
use semcycle::isosurface::{marching_cubes, mesh_diagnostics, DEFAULT_ISO};
use semcycle::pipeline::{run_pipeline, PipelineConfig};
use semcycle::pose_opt::{finetune_viewpoint, GradientMethod, OptimizerSettings};
use semcycle::project_eval::{
    bbox_from_silhouette, evaluate_dataset_weighted, project_keypoints_with_visibility, render_overlay, EvalRecord,
    GroundTruthKeypoint, ThresholdMode, Weighting, DEFAULT_ALPHA, DEFAULT_DEPTH_EPS,
};
use semcycle::rasterizer::{rasterize_silhouette, SilhouetteImage};
use semcycle::transfer::{transfer_from_database, DenseEmbedding, EmbeddingDatabase, KeypointSet, NnMode};
use semcycle::Error;

#[derive(Parser)]
#[command(name = "semcycle", version, about = "Meshing, viewpoint refinement, keypoint transfer and PCK evaluation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Camera distance from the object centre.
    #[arg(long, global = true)]
    camera_distance: Option<f64>,
    /// Vertical field of view in degrees.
    #[arg(long, global = true)]
    fov: Option<f64>,
    /// Square image size in pixels.
    #[arg(long, global = true)]
    resolution: Option<u32>,
    /// Marching-cubes iso level.
    #[arg(long, global = true)]
    iso: Option<f64>,
    /// Soft-rasterizer sharpness used while fine-tuning.
    #[arg(long, global = true)]
    sharpness: Option<f64>,
    /// PCK tolerance factor; repeat or separate with commas for a sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// PCK threshold reference.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Seed for stochastic steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Use the ground-truth mesh and dense embedding.
    #[arg(long, global = true)]
    gt_shape: bool,
    /// Use the ground-truth viewpoint.
    #[arg(long, global = true)]
    gt_viewpoint: bool,
    /// Use the scene's own semantic model.
    #[arg(long, global = true)]
    gt_semantic_model: bool,
    /// Log at debug level.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Img,
    Bbox,
}

impl From<ModeArg> for ThresholdMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Img => ThresholdMode::Img,
            ModeArg::Bbox => ThresholdMode::Bbox,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GradientArg {
    Soft,
    Fd,
}

#[derive(Clone, Copy, ValueEnum)]
enum NnModeArg {
    Mean,
    PerModel,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a mesh from a VOXF occupancy grid and print diagnostics.
    Mesh {
        voxels: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Refine a viewpoint against a target silhouette.
    Finetune {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        silhouette: PathBuf,
        /// Initial azimuth in degrees (with --init-elevation).
        #[arg(long, allow_negative_numbers = true, requires = "init_elevation", conflicts_with = "distribution")]
        init_azimuth: Option<f64>,
        #[arg(long, allow_negative_numbers = true, requires = "init_azimuth")]
        init_elevation: Option<f64>,
        /// Bin distribution JSON; the argmax bins give the initial pose.
        #[arg(long, required_unless_present = "init_azimuth")]
        distribution: Option<PathBuf>,
        /// Final viewpoint JSON.
        #[arg(short, long)]
        out: PathBuf,
        /// Trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, value_enum)]
        gradient: Option<GradientArg>,
    },
    /// Transfer database keypoints onto a dense embedding.
    Transfer {
        /// Mesh the dense samples lie on; face indices are checked against it.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        dense: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "mean")]
        nn_mode: NnModeArg,
        /// Scan every sample instead of using the tree index.
        #[arg(long)]
        brute_force: bool,
    },
    /// Project 3D keypoints with visibility and score them with PCK.
    ProjectEval {
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        /// Viewpoint JSON as written by `finetune`.
        #[arg(long)]
        viewpoint: PathBuf,
        /// Ground truth: a keypoint set (visible entries with pixels are used)
        /// or a list of {semantic_id, pixel}.
        #[arg(long)]
        gt: PathBuf,
        /// Silhouette for the bounding box; defaults to rendering the mesh.
        #[arg(long)]
        silhouette: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Projected keypoints JSON.
        #[arg(long)]
        projected: Option<PathBuf>,
        /// PPM overlay of the silhouette and both keypoint sets.
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[arg(long)]
        depth_eps: Option<f64>,
        #[arg(long, value_enum, default_value = "keypoint")]
        weighting: WeightingArg,
    },
    /// Run every scene of a manifest.
    Pipeline {
        config: PathBuf,
        /// Directory for report.json and records.json.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write a synthetic scene corpus.
    MakeFixtures {
        out_dir: PathBuf,
        /// Corpus parameters JSON; flags below override it.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        scenes: Option<usize>,
        /// Library embedding noise; dense-embedding noise scales with it.
        #[arg(long)]
        embedding_noise: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Keypoint,
    Image,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.global.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SEMCYCLE_LOG")
        .format_timestamp(None)
        .format_target(false)
        .init();

    let result = match &cli.command {
        Command::Mesh { voxels, out } => cmd_mesh(&cli.global, voxels, out),
        Command::Finetune {
            mesh,
            silhouette,
            init_azimuth,
            init_elevation,
            distribution,
            out,
            trace,
            steps,
            learning_rate,
            gradient,
        } => {
            let init = match (init_azimuth, init_elevation) {
                (Some(a), Some(e)) => Init::Pose(Viewpoint::new(*a, *e)),
                _ => Init::Distribution(distribution.clone().expect("clap requires one")),
            };
            let mut settings = OptimizerSettings::default();
            if let Some(s) = steps {
                settings.max_steps = *s;
            }
            if let Some(lr) = learning_rate {
                settings.learning_rate = *lr;
            }
            if let Some(g) = gradient {
                settings.gradient_method = match g {
                    GradientArg::Soft => GradientMethod::SoftAnalytic,
                    GradientArg::Fd => GradientMethod::FiniteDifference,
                };
            }
            cmd_finetune(&cli.global, mesh, silhouette, init, settings, out, trace.as_deref())
        }
        Command::Transfer { mesh, dense, db, out, nn_mode, brute_force } => {
            let mode = match nn_mode {
                NnModeArg::Mean => NnMode::Mean,
                NnModeArg::PerModel => NnMode::PerModel,
            };
            cmd_transfer(mesh.as_deref(), dense, db, out, mode, *brute_force)
        }
        Command::ProjectEval { keypoints, mesh, viewpoint, gt, silhouette, out, projected, overlay, depth_eps, weighting } => {
            let weighting = match weighting {
                WeightingArg::Keypoint => Weighting::Keypoint,
                WeightingArg::Image => Weighting::Image,
            };
            cmd_project_eval(
                &cli.global,
                ProjectEvalArgs {
                    keypoints,
                    mesh,
                    viewpoint,
                    gt,
                    silhouette: silhouette.as_deref(),
                    out,
                    projected: projected.as_deref(),
                    overlay: overlay.as_deref(),
                    depth_eps: depth_eps.unwrap_or(DEFAULT_DEPTH_EPS),
                    weighting,
                },
            )
        }
        Command::Pipeline { config, out } => cmd_pipeline(&cli.global, config, out),
        Command::MakeFixtures { out_dir, params, scenes, embedding_noise } => {
            cmd_make_fixtures(&cli.global, out_dir, params.as_deref(), *scenes, *embedding_noise)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => 3,
                _ => 2,
            })
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn camera(g: &Global, base: CameraModel) -> Result<CameraModel, Failure> {
    let mut cam = base;
    if let Some(d) = g.camera_distance {
        cam.distance = d;
    }
    if let Some(f) = g.fov {
        cam.fov_deg = f;
    }
    if let Some(r) = g.resolution {
        cam.width = r;
        cam.height = r;
    }
    cam.validate().map_err(usage)?;
    Ok(cam)
}

fn alphas(g: &Global) -> Result<Vec<f64>, Failure> {
    if let Some(a) = g.alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Failure::Usage(format!("alpha must be positive, got {a}")));
    }
    Ok(if g.alpha.is_empty() { vec![DEFAULT_ALPHA] } else { g.alpha.clone() })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn cmd_mesh(g: &Global, voxels: &Path, out: &Path) -> CliResult {
    let grid = VoxelGrid::read(voxels)?;
    let mesh = marching_cubes(&grid, g.iso.unwrap_or(DEFAULT_ISO))?;
    if mesh.is_empty() {
        log::warn!("no surface crosses the iso level; writing an empty mesh");
    }
    mesh.write_obj(out)?;
    let d = mesh_diagnostics(&mesh);
    println!("vertices: {}", mesh.vertices.len());
    println!("faces: {}", mesh.faces.len());
    println!("surface_area: {:.6}", d.surface_area);
    println!("euler_characteristic: {}", d.euler_characteristic);
    println!("watertight: {}", d.watertight);
    Ok(())
}

enum Init {
    Pose(Viewpoint),
    Distribution(PathBuf),
}

fn cmd_finetune(
    g: &Global,
    mesh: &Path,
    silhouette: &Path,
    init: Init,
    mut settings: OptimizerSettings,
    out: &Path,
    trace_path: Option<&Path>,
) -> CliResult {
    if let Some(s) = g.sharpness {
        settings.sharpness = s;
    }
    settings.validate().map_err(usage)?;
    let target = SilhouetteImage::read_pgm(silhouette)?;
    // without an explicit resolution the camera follows the silhouette
    let base = CameraModel { width: target.width, height: target.height, ..Default::default() };
    let cam = camera(g, base)?;
    let mesh = TriangleMesh::read_obj(mesh)?;
    let vp_init = match init {
        Init::Pose(vp) => vp,
        Init::Distribution(path) => {
            let dist: BinDistribution = read_json(&path)?;
            dist.validate()?;
            let (a, e) = dist.argmax();
            let vp = decode_viewpoint_bins(a, e);
            log::info!(
                "argmax bins ({a}, {e}) -> initial viewpoint ({}, {})",
                vp.azimuth_deg(),
                vp.elevation_deg()
            );
            vp
        }
    };
    let trace = finetune_viewpoint(&mesh, &target, &vp_init, &cam, &settings)?;
    let best = trace.best_viewpoint;
    write_text(out, &(serde_json::to_string_pretty(&best).expect("viewpoint serializes") + "\n"))?;
    if let Some(p) = trace_path {
        trace.write_csv(p)?;
    }
    println!("initial: azimuth {} elevation {}", vp_init.azimuth_deg(), vp_init.elevation_deg());
    println!("final: azimuth {} elevation {}", best.azimuth_deg(), best.elevation_deg());
    println!("loss: {} ({} steps, converged: {})", trace.best_loss, trace.steps.len(), trace.converged);
    Ok(())
}

fn cmd_transfer(mesh: Option<&Path>, dense: &Path, db: &Path, out: &Path, mode: NnMode, brute_force: bool) -> CliResult {
    let dense = DenseEmbedding::load(dense)?;
    if let Some(path) = mesh {
        let mesh = TriangleMesh::read_obj(path)?;
        if let Some((i, s)) = dense.samples.iter().enumerate().find(|(_, s)| s.face_index >= mesh.faces.len()) {
            return Err(Error::Record {
                index: i,
                message: format!("face index {} but the mesh has {} faces", s.face_index, mesh.faces.len()),
            }
            .into());
        }
    }
    let db = EmbeddingDatabase::load(db)?;
    let (kps, excluded) = transfer_from_database(&dense, &db, mode, brute_force)?;
    for id in excluded {
        log::warn!("semantic id {id} has a zero mean embedding and was skipped");
    }
    kps.save(out)?;
    println!("transferred {} keypoints", kps.keypoints.len());
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GroundTruthFile {
    List(Vec<GroundTruthKeypoint>),
    Set(KeypointSet),
}

struct ProjectEvalArgs<'a> {
    keypoints: &'a Path,
    mesh: &'a Path,
    viewpoint: &'a Path,
    gt: &'a Path,
    silhouette: Option<&'a Path>,
    out: &'a Path,
    projected: Option<&'a Path>,
    overlay: Option<&'a Path>,
    depth_eps: f64,
    weighting: Weighting,
}

fn cmd_project_eval(g: &Global, a: ProjectEvalArgs<'_>) -> CliResult {
    let cam = camera(g, CameraModel::default())?;
    let alphas = alphas(g)?;
    if !(a.depth_eps >= 0.0 && a.depth_eps.is_finite()) {
        return Err(Failure::Usage("depth_eps must be nonnegative".into()));
    }
    let kps = KeypointSet::load(a.keypoints)?;
    let mesh = TriangleMesh::read_obj(a.mesh)?;
    let vp: Viewpoint = read_json(a.viewpoint)?;
    let ground_truth = match read_json::<GroundTruthFile>(a.gt)? {
        GroundTruthFile::List(list) => list,
        GroundTruthFile::Set(set) => {
            set.validate()?;
            set.keypoints
                .iter()
                .filter(|k| k.visible != Some(false))
                .filter_map(|k| k.pixel.map(|pixel| GroundTruthKeypoint { semantic_id: k.semantic_id, pixel }))
                .collect()
        }
    };
    let projected = project_keypoints_with_visibility(&kps, &mesh, &vp, &cam, a.depth_eps)?;
    let silhouette = match a.silhouette {
        Some(p) => {
            let s = SilhouetteImage::read_pgm(p)?;
            if s.width != cam.width || s.height != cam.height {
                return Err(Error::Dimension(format!(
                    "silhouette is {}x{} but the camera renders {}x{}",
                    s.width, s.height, cam.width, cam.height
                ))
                .into());
            }
            s
        }
        None => rasterize_silhouette(&mesh, &vp, &cam),
    };
    let bbox = bbox_from_silhouette(&silhouette)?;
    let record = EvalRecord {
        image_id: a.keypoints.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        predicted: projected.clone(),
        ground_truth: ground_truth.clone(),
        image_width: cam.width,
        image_height: cam.height,
        bbox_width: bbox.width,
        bbox_height: bbox.height,
    };
    let mode = g.mode.map(ThresholdMode::from).unwrap_or_default();
    let reports = alphas
        .iter()
        .map(|&alpha| evaluate_dataset_weighted(std::slice::from_ref(&record), alpha, mode, a.weighting))
        .collect::<Result<Vec<_>, _>>()?;
    write_text(a.out, &(serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n"))?;
    if let Some(p) = a.projected {
        projected.save(p)?;
    }
    if let Some(p) = a.overlay {
        std::fs::write(p, render_overlay(&silhouette, &projected, &ground_truth)).map_err(|e| Error::io(p, e))?;
    }
    let tables: Vec<String> = reports.iter().map(|r| r.to_text_table()).collect();
    print!("{}", tables.join("\n"));
    Ok(())
}

fn cmd_pipeline(g: &Global, config_path: &Path, out: &Path) -> CliResult {
    let mut config = PipelineConfig::load(config_path)?;
    config.camera = camera(g, config.camera)?;
    if let Some(iso) = g.iso {
        config.iso = iso;
    }
    if let Some(s) = g.sharpness {
        config.optimizer.sharpness = s;
    }
    if !g.alpha.is_empty() {
        config.alphas = alphas(g)?;
    }
    if let Some(m) = g.mode {
        config.mode = m.into();
    }
    if let Some(j) = g.jobs {
        config.jobs = j;
    }
    config.swap.use_gt_shape |= g.gt_shape;
    config.swap.use_gt_viewpoint |= g.gt_viewpoint;
    config.swap.use_gt_semantic_model |= g.gt_semantic_model;
    config.validate().map_err(usage)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let report = run_pipeline(&config, base)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report.save(&out.join("report.json"))?;
    write_text(
        &out.join("records.json"),
        &(serde_json::to_string_pretty(&report.records()).expect("records serialize") + "\n"),
    )?;
    print!("{}", report.to_text_table());
    if report.failed > 0 {
        return Err(Error::invalid(format!("{} of {} scenes failed", report.failed, report.scenes.len())).into());
    }
    Ok(())
}

fn cmd_make_fixtures(
    g: &Global,
    out_dir: &Path,
    params: Option<&Path>,
    scenes: Option<usize>,
    embedding_noise: Option<f64>,
) -> CliResult {
    let mut p: CorpusParams = match params {
        Some(path) => read_json(path)?,
        None => CorpusParams::default(),
    };
    if let Some(s) = g.seed {
        p.seed = s;
    }
    if let Some(r) = g.resolution {
        p.resolution = r;
    }
    if let Some(n) = scenes {
        p.scenes = n;
    }
    if let Some(e) = embedding_noise {
        p = p.with_embedding_noise(e);
    }
    p.validate().map_err(usage)?;
    let corpus = make_corpus(out_dir, &p)?;
    println!("wrote {} scenes to {}", corpus.scenes.len(), out_dir.display());
    Ok(())
}
