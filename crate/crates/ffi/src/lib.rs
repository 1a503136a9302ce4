//! C interface to `semcycle`.
//!
//! Every fallible call returns an [`ScStatus`]; on failure the message is
//! available from [`sc_last_error_message`] on the same thread until the
//! next failing call. Objects are opaque handles created by `sc_*_new`,
//! `sc_*_read` or a computation and released with the matching `sc_*_free`.
//! Passing NULL to a free function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use semcycle::geometry::{CameraModel, TriangleMesh, Viewpoint, VoxelGrid};
use semcycle::isosurface::{marching_cubes, mesh_diagnostics};
use semcycle::pose_opt::{finetune_viewpoint, pose_gradient, GradientMethod, OptimizerSettings};
use semcycle::project_eval::{
    evaluate_dataset_weighted, load_records, pck_correct, project_keypoints_with_visibility, ThresholdMode, Weighting,
};
use semcycle::rasterizer::{rasterize_silhouette, soft_silhouette, SilhouetteImage};
use semcycle::transfer::{transfer_from_database, DenseEmbedding, EmbeddingDatabase, KeypointSet, NnMode};
use semcycle::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed input, including out-of-range entries in a caller buffer.
    Parse = 4,
    Dimension = 5,
    Coverage = 6,
    Numerical = 7,
    EmptyBoundingBox = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

pub struct ScVoxelGrid(VoxelGrid);
pub struct ScMesh(TriangleMesh);
pub struct ScSilhouette(SilhouetteImage);
pub struct ScEmbeddingDb(EmbeddingDatabase);
pub struct ScDenseEmbedding(DenseEmbedding);
pub struct ScKeypoints(KeypointSet);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScViewpoint {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScCamera {
    pub distance: f64,
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScMeshDiagnostics {
    pub surface_area: f64,
    pub euler_characteristic: i64,
    pub watertight: bool,
    pub vertices: usize,
    pub faces: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScOptimizerSettings {
    pub max_steps: u32,
    pub learning_rate: f64,
    /// false selects central finite differences.
    pub analytic_gradient: bool,
    pub fd_step_deg: f64,
    pub sharpness: f64,
    pub convergence_tol: f64,
    pub max_step_deg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScPoseResult {
    pub viewpoint: ScViewpoint,
    pub best_loss: f64,
    /// Poses visited, including the initial one.
    pub steps: u32,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScKeypoint {
    pub semantic_id: u32,
    pub position: [f64; 3],
    pub has_pixel: bool,
    pub pixel: [f64; 2],
    /// 1 visible, 0 hidden, -1 not computed.
    pub visibility: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScNnMode {
    Mean = 0,
    PerModel = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScThresholdMode {
    Img = 0,
    Bbox = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScWeighting {
    Keypoint = 0,
    Image = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ScStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => ScStatus::Io,
            Error::Binary { .. } | Error::Parse { .. } | Error::Record { .. } => ScStatus::Parse,
            Error::Invalid(_) => ScStatus::InvalidArgument,
            Error::Dimension(_) => ScStatus::Dimension,
            Error::EmptyBoundingBox => ScStatus::EmptyBoundingBox,
            Error::Coverage(_) => ScStatus::Coverage,
            Error::Numerical(_) => ScStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ScStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ScStatus::InvalidArgument, msg.into())
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn run(f: impl FnOnce() -> Result<(), Failure>) -> ScStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            ScStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output"));
    }
    *out = value;
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

impl ScCamera {
    fn to_core(self) -> Result<CameraModel, Failure> {
        Ok(CameraModel::new(self.distance, self.fov_deg, self.width, self.height, self.near, self.far)?)
    }
}

impl ScViewpoint {
    fn to_core(self) -> Viewpoint {
        Viewpoint::new(self.azimuth_deg, self.elevation_deg)
    }

    fn from_core(vp: &Viewpoint) -> Self {
        ScViewpoint { azimuth_deg: vp.azimuth_deg(), elevation_deg: vp.elevation_deg() }
    }
}

impl ScOptimizerSettings {
    fn to_core(self) -> OptimizerSettings {
        OptimizerSettings {
            max_steps: self.max_steps as usize,
            learning_rate: self.learning_rate,
            gradient_method: if self.analytic_gradient { GradientMethod::SoftAnalytic } else { GradientMethod::FiniteDifference },
            fd_step_deg: self.fd_step_deg,
            sharpness: self.sharpness,
            convergence_tol: self.convergence_tol,
            max_step_deg: self.max_step_deg,
        }
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn sc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn sc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default camera (distance 2, 30 degree fov, near 0.1, far 10) rendering
/// square images of `resolution` pixels.
#[no_mangle]
pub extern "C" fn sc_camera_default(resolution: u32) -> ScCamera {
    let c = CameraModel::with_resolution(resolution);
    ScCamera { distance: c.distance, fov_deg: c.fov_deg, width: c.width, height: c.height, near: c.near, far: c.far }
}

#[no_mangle]
pub extern "C" fn sc_optimizer_settings_default() -> ScOptimizerSettings {
    let s = OptimizerSettings::default();
    ScOptimizerSettings {
        max_steps: s.max_steps as u32,
        learning_rate: s.learning_rate,
        analytic_gradient: s.gradient_method == GradientMethod::SoftAnalytic,
        fd_step_deg: s.fd_step_deg,
        sharpness: s.sharpness,
        convergence_tol: s.convergence_tol,
        max_step_deg: s.max_step_deg,
    }
}

// ---- voxel grids ----

/// Copies `nx * ny * nz` occupancies in [0, 1], indexed `(x * ny + y) * nz + z`.
///
/// # Safety
/// `values` must point to `nx * ny * nz` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_voxel_grid_new(nx: usize, ny: usize, nz: usize, values: *const f32, out: *mut *mut ScVoxelGrid) -> ScStatus {
    run(|| {
        let n = nx.checked_mul(ny).and_then(|v| v.checked_mul(nz)).ok_or_else(|| invalid("grid size overflows"))?;
        let values = slice_arg(values, n, "values")?.to_vec();
        put(out, ScVoxelGrid(VoxelGrid::new([nx, ny, nz], values)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_voxel_grid_read(path: *const c_char, out: *mut *mut ScVoxelGrid) -> ScStatus {
    run(|| put(out, ScVoxelGrid(VoxelGrid::read(&path_arg(path)?)?)))
}

/// # Safety
/// `grid` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_voxel_grid_free(grid: *mut ScVoxelGrid) {
    free(grid)
}

// ---- meshes ----

/// Builds a mesh from `n_vertices` xyz triples and `n_faces` index triples.
///
/// # Safety
/// `vertices` must hold `3 * n_vertices` doubles and `faces` `3 * n_faces`
/// indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_new(
    vertices: *const f64,
    n_vertices: usize,
    faces: *const u32,
    n_faces: usize,
    out: *mut *mut ScMesh,
) -> ScStatus {
    run(|| {
        let v = slice_arg(vertices, n_vertices.checked_mul(3).ok_or_else(|| invalid("too many vertices"))?, "vertices")?;
        let f = slice_arg(faces, n_faces.checked_mul(3).ok_or_else(|| invalid("too many faces"))?, "faces")?;
        let vertices = v.chunks_exact(3).map(|c| [c[0], c[1], c[2]].into()).collect();
        let faces = f.chunks_exact(3).map(|c| [c[0] as usize, c[1] as usize, c[2] as usize]).collect();
        put(out, ScMesh(TriangleMesh::new(vertices, faces)?))
    })
}

/// Extracts the `iso` level set of `grid`. An empty grid yields an empty mesh.
///
/// # Safety
/// `grid` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_marching_cubes(grid: *const ScVoxelGrid, iso: f64, out: *mut *mut ScMesh) -> ScStatus {
    run(|| {
        let grid = deref(grid, "grid")?;
        put(out, ScMesh(marching_cubes(&grid.0, iso)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_read_obj(path: *const c_char, out: *mut *mut ScMesh) -> ScStatus {
    run(|| put(out, ScMesh(TriangleMesh::read_obj(&path_arg(path)?)?)))
}

/// # Safety
/// `mesh` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_write_obj(mesh: *const ScMesh, path: *const c_char) -> ScStatus {
    run(|| Ok(deref(mesh, "mesh")?.0.write_obj(&path_arg(path)?)?))
}

/// Vertex count, or 0 for NULL.
///
/// # Safety
/// `mesh` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_vertex_count(mesh: *const ScMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.vertices.len())
}

/// Face count, or 0 for NULL.
///
/// # Safety
/// `mesh` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_face_count(mesh: *const ScMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.faces.len())
}

/// Copies vertices as xyz triples. `capacity` counts doubles.
///
/// # Safety
/// `buffer` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_copy_vertices(mesh: *const ScMesh, buffer: *mut f64, capacity: usize) -> ScStatus {
    run(|| {
        let mesh = &deref(mesh, "mesh")?.0;
        let flat: Vec<f64> = mesh.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        copy_out(&flat, buffer, capacity)
    })
}

/// Copies faces as index triples. `capacity` counts indices.
///
/// # Safety
/// `buffer` must have room for `capacity` indices.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_copy_faces(mesh: *const ScMesh, buffer: *mut u32, capacity: usize) -> ScStatus {
    run(|| {
        let mesh = &deref(mesh, "mesh")?.0;
        let mut flat = Vec::with_capacity(mesh.faces.len() * 3);
        for f in &mesh.faces {
            for &i in f {
                flat.push(u32::try_from(i).map_err(|_| invalid("vertex index exceeds 32 bits"))?);
            }
        }
        copy_out(&flat, buffer, capacity)
    })
}

/// # Safety
/// `mesh` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_diagnostics(mesh: *const ScMesh, out: *mut ScMeshDiagnostics) -> ScStatus {
    run(|| {
        let mesh = &deref(mesh, "mesh")?.0;
        let d = mesh_diagnostics(mesh);
        write(
            out,
            ScMeshDiagnostics {
                surface_area: d.surface_area,
                euler_characteristic: d.euler_characteristic,
                watertight: d.watertight,
                vertices: mesh.vertices.len(),
                faces: mesh.faces.len(),
            },
        )
    })
}

/// # Safety
/// `mesh` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_mesh_free(mesh: *mut ScMesh) {
    free(mesh)
}

unsafe fn copy_out<T: Copy>(src: &[T], buffer: *mut T, capacity: usize) -> Result<(), Failure> {
    if capacity < src.len() {
        return Err(Failure(ScStatus::BufferTooSmall, format!("need room for {} values, got {capacity}", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if buffer.is_null() {
        return Err(null("buffer"));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buffer, src.len());
    Ok(())
}

// ---- silhouettes ----

/// Row-major coverage values in [0, 1].
///
/// # Safety
/// `values` must hold `width * height` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_silhouette_new(width: u32, height: u32, values: *const f64, out: *mut *mut ScSilhouette) -> ScStatus {
    run(|| {
        let values = slice_arg(values, width as usize * height as usize, "values")?.to_vec();
        put(out, ScSilhouette(SilhouetteImage::new(width, height, values)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_silhouette_read_pgm(path: *const c_char, out: *mut *mut ScSilhouette) -> ScStatus {
    run(|| put(out, ScSilhouette(SilhouetteImage::read_pgm(&path_arg(path)?)?)))
}

/// Binary silhouette with near/far clipping.
///
/// # Safety
/// `mesh` and `camera` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_rasterize_silhouette(
    mesh: *const ScMesh,
    viewpoint: ScViewpoint,
    camera: *const ScCamera,
    out: *mut *mut ScSilhouette,
) -> ScStatus {
    run(|| {
        let cam = deref(camera, "camera")?.to_core()?;
        put(out, ScSilhouette(rasterize_silhouette(&deref(mesh, "mesh")?.0, &viewpoint.to_core(), &cam)))
    })
}

/// Soft silhouette at the given sharpness.
///
/// # Safety
/// `mesh` and `camera` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_soft_silhouette(
    mesh: *const ScMesh,
    viewpoint: ScViewpoint,
    camera: *const ScCamera,
    sharpness: f64,
    out: *mut *mut ScSilhouette,
) -> ScStatus {
    run(|| {
        let cam = deref(camera, "camera")?.to_core()?;
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(invalid(format!("sharpness must be positive, got {sharpness}")));
        }
        put(out, ScSilhouette(soft_silhouette(&deref(mesh, "mesh")?.0, &viewpoint.to_core(), &cam, sharpness)))
    })
}

/// # Safety
/// `sil` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_silhouette_width(sil: *const ScSilhouette) -> u32 {
    sil.as_ref().map_or(0, |s| s.0.width)
}

/// # Safety
/// `sil` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_silhouette_height(sil: *const ScSilhouette) -> u32 {
    sil.as_ref().map_or(0, |s| s.0.height)
}

/// # Safety
/// `buffer` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_silhouette_copy_values(sil: *const ScSilhouette, buffer: *mut f64, capacity: usize) -> ScStatus {
    run(|| copy_out(&deref(sil, "silhouette")?.0.values, buffer, capacity))
}

/// # Safety
/// `sil` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_silhouette_free(sil: *mut ScSilhouette) {
    free(sil)
}

// ---- pose refinement ----

/// Gradient of the soft silhouette loss per degree of azimuth and elevation.
///
/// # Safety
/// Handles and pointers must be valid; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_pose_gradient(
    mesh: *const ScMesh,
    viewpoint: ScViewpoint,
    camera: *const ScCamera,
    target: *const ScSilhouette,
    settings: *const ScOptimizerSettings,
    out_d_azimuth: *mut f64,
    out_d_elevation: *mut f64,
) -> ScStatus {
    run(|| {
        let cam = deref(camera, "camera")?.to_core()?;
        let settings = deref(settings, "settings")?.to_core();
        settings.validate()?;
        let (da, de) = pose_gradient(&deref(mesh, "mesh")?.0, &viewpoint.to_core(), &cam, &deref(target, "target")?.0, &settings)?;
        if out_d_elevation.is_null() {
            return Err(null("output"));
        }
        write(out_d_azimuth, da)?;
        write(out_d_elevation, de)
    })
}

/// Refines `init` against `target`. The result is the visited pose with the
/// lowest hard-silhouette loss.
///
/// # Safety
/// Handles and pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_finetune_viewpoint(
    mesh: *const ScMesh,
    target: *const ScSilhouette,
    init: ScViewpoint,
    camera: *const ScCamera,
    settings: *const ScOptimizerSettings,
    out: *mut ScPoseResult,
) -> ScStatus {
    run(|| {
        let cam = deref(camera, "camera")?.to_core()?;
        let settings = deref(settings, "settings")?.to_core();
        let trace = finetune_viewpoint(&deref(mesh, "mesh")?.0, &deref(target, "target")?.0, &init.to_core(), &cam, &settings)?;
        write(
            out,
            ScPoseResult {
                viewpoint: ScViewpoint::from_core(&trace.best_viewpoint),
                best_loss: trace.best_loss,
                steps: trace.steps.len() as u32,
                converged: trace.converged,
            },
        )
    })
}

// ---- keypoint transfer ----

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_embedding_db_read(path: *const c_char, out: *mut *mut ScEmbeddingDb) -> ScStatus {
    run(|| put(out, ScEmbeddingDb(EmbeddingDatabase::load(&path_arg(path)?)?)))
}

/// # Safety
/// `db` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_embedding_db_free(db: *mut ScEmbeddingDb) {
    free(db)
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_dense_embedding_read(path: *const c_char, out: *mut *mut ScDenseEmbedding) -> ScStatus {
    run(|| put(out, ScDenseEmbedding(DenseEmbedding::load(&path_arg(path)?)?)))
}

/// # Safety
/// `dense` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_dense_embedding_free(dense: *mut ScDenseEmbedding) {
    free(dense)
}

/// Places every database semantic id on the dense sample with the nearest
/// embedding.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_transfer_keypoints(
    dense: *const ScDenseEmbedding,
    db: *const ScEmbeddingDb,
    mode: ScNnMode,
    brute_force: bool,
    out: *mut *mut ScKeypoints,
) -> ScStatus {
    run(|| {
        let mode = match mode {
            ScNnMode::Mean => NnMode::Mean,
            ScNnMode::PerModel => NnMode::PerModel,
        };
        let (kps, _) = transfer_from_database(&deref(dense, "dense")?.0, &deref(db, "db")?.0, mode, brute_force)?;
        put(out, ScKeypoints(kps))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_keypoints_read(path: *const c_char, out: *mut *mut ScKeypoints) -> ScStatus {
    run(|| put(out, ScKeypoints(KeypointSet::load(&path_arg(path)?)?)))
}

/// # Safety
/// `kps` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sc_keypoints_write(kps: *const ScKeypoints, path: *const c_char) -> ScStatus {
    run(|| Ok(deref(kps, "keypoints")?.0.save(&path_arg(path)?)?))
}

/// # Safety
/// `kps` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_keypoints_count(kps: *const ScKeypoints) -> usize {
    kps.as_ref().map_or(0, |k| k.0.keypoints.len())
}

/// # Safety
/// `kps` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_keypoints_get(kps: *const ScKeypoints, index: usize, out: *mut ScKeypoint) -> ScStatus {
    run(|| {
        let set = &deref(kps, "keypoints")?.0;
        let k = set.keypoints.get(index).ok_or_else(|| invalid(format!("index {index} out of range for {} keypoints", set.keypoints.len())))?;
        write(
            out,
            ScKeypoint {
                semantic_id: k.semantic_id,
                position: k.position3d,
                has_pixel: k.pixel.is_some(),
                pixel: k.pixel.unwrap_or([0.0; 2]),
                visibility: k.visible.map_or(-1, i32::from),
            },
        )
    })
}

/// Projects keypoints and marks visibility against the mesh's z-buffer.
///
/// # Safety
/// Handles and pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_project_keypoints(
    kps: *const ScKeypoints,
    mesh: *const ScMesh,
    viewpoint: ScViewpoint,
    camera: *const ScCamera,
    depth_eps: f64,
    out: *mut *mut ScKeypoints,
) -> ScStatus {
    run(|| {
        let cam = deref(camera, "camera")?.to_core()?;
        if !(depth_eps >= 0.0 && depth_eps.is_finite()) {
            return Err(invalid(format!("depth_eps must be finite and non-negative, got {depth_eps}")));
        }
        let projected =
            project_keypoints_with_visibility(&deref(kps, "keypoints")?.0, &deref(mesh, "mesh")?.0, &viewpoint.to_core(), &cam, depth_eps)?;
        put(out, ScKeypoints(projected))
    })
}

/// # Safety
/// `kps` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_keypoints_free(kps: *mut ScKeypoints) {
    free(kps)
}

// ---- evaluation ----

/// True iff the two pixels are within `alpha * max(width, height)`.
#[no_mangle]
pub extern "C" fn sc_pck_correct(
    predicted_x: f64,
    predicted_y: f64,
    truth_x: f64,
    truth_y: f64,
    alpha: f64,
    width: f64,
    height: f64,
) -> bool {
    pck_correct([predicted_x, predicted_y], [truth_x, truth_y], alpha, width, height)
}

/// Mean PCK over a JSON file of evaluation records.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_mean` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_evaluate_records(
    path: *const c_char,
    alpha: f64,
    mode: ScThresholdMode,
    weighting: ScWeighting,
    out_mean: *mut f64,
) -> ScStatus {
    run(|| {
        let records = load_records(&path_arg(path)?)?;
        let mode = match mode {
            ScThresholdMode::Img => ThresholdMode::Img,
            ScThresholdMode::Bbox => ThresholdMode::Bbox,
        };
        let weighting = match weighting {
            ScWeighting::Keypoint => Weighting::Keypoint,
            ScWeighting::Image => Weighting::Image,
        };
        let report = evaluate_dataset_weighted(&records, alpha, mode, weighting)?;
        write(out_mean, report.mean)
    })
}
