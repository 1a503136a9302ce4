#ifndef SEMCYCLE_H
#define SEMCYCLE_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_ARGUMENT = 2,
  SC_STATUS_IO = 3,
  /**
   * Malformed input, including out-of-range entries in a caller buffer.
   */
  SC_STATUS_PARSE = 4,
  SC_STATUS_DIMENSION = 5,
  SC_STATUS_COVERAGE = 6,
  SC_STATUS_NUMERICAL = 7,
  SC_STATUS_EMPTY_BOUNDING_BOX = 8,
  SC_STATUS_BUFFER_TOO_SMALL = 9,
  SC_STATUS_PANIC = 10,
} ScStatus;

typedef enum ScNnMode {
  SC_NN_MODE_MEAN = 0,
  SC_NN_MODE_PER_MODEL = 1,
} ScNnMode;

typedef enum ScThresholdMode {
  SC_THRESHOLD_MODE_IMG = 0,
  SC_THRESHOLD_MODE_BBOX = 1,
} ScThresholdMode;

typedef enum ScWeighting {
  SC_WEIGHTING_KEYPOINT = 0,
  SC_WEIGHTING_IMAGE = 1,
} ScWeighting;

typedef struct ScDenseEmbedding ScDenseEmbedding;

typedef struct ScEmbeddingDb ScEmbeddingDb;

typedef struct ScKeypoints ScKeypoints;

typedef struct ScMesh ScMesh;

typedef struct ScSilhouette ScSilhouette;

typedef struct ScVoxelGrid ScVoxelGrid;

typedef struct ScCamera {
  double distance;
  double fov_deg;
  uint32_t width;
  uint32_t height;
  double near;
  double far;
} ScCamera;

typedef struct ScOptimizerSettings {
  uint32_t max_steps;
  double learning_rate;
  /**
   * false selects central finite differences.
   */
  bool analytic_gradient;
  double fd_step_deg;
  double sharpness;
  double convergence_tol;
  double max_step_deg;
} ScOptimizerSettings;

typedef struct ScMeshDiagnostics {
  double surface_area;
  int64_t euler_characteristic;
  bool watertight;
  size_t vertices;
  size_t faces;
} ScMeshDiagnostics;

typedef struct ScViewpoint {
  double azimuth_deg;
  double elevation_deg;
} ScViewpoint;

typedef struct ScPoseResult {
  struct ScViewpoint viewpoint;
  double best_loss;
  /**
   * Poses visited, including the initial one.
   */
  uint32_t steps;
  bool converged;
} ScPoseResult;

typedef struct ScKeypoint {
  uint32_t semantic_id;
  double position[3];
  bool has_pixel;
  double pixel[2];
  /**
   * 1 visible, 0 hidden, -1 not computed.
   */
  int32_t visibility;
} ScKeypoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on this thread.
 */
const char *sc_last_error_message(void);

/**
 * Static NUL-terminated version string.
 */
const char *sc_version(void);

/**
 * Default camera (distance 2, 30 degree fov, near 0.1, far 10) rendering
 * square images of `resolution` pixels.
 */
struct ScCamera sc_camera_default(uint32_t resolution);

struct ScOptimizerSettings sc_optimizer_settings_default(void);

/**
 * Copies `nx * ny * nz` occupancies in [0, 1], indexed `(x * ny + y) * nz + z`.
 *
 * # Safety
 * `values` must point to `nx * ny * nz` floats; `out` must be writable.
 */
enum ScStatus sc_voxel_grid_new(size_t nx,
                                size_t ny,
                                size_t nz,
                                const float *values,
                                struct ScVoxelGrid **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_voxel_grid_read(const char *path, struct ScVoxelGrid **out);

/**
 * # Safety
 * `grid` must be NULL or a live handle.
 */
void sc_voxel_grid_free(struct ScVoxelGrid *grid);

/**
 * Builds a mesh from `n_vertices` xyz triples and `n_faces` index triples.
 *
 * # Safety
 * `vertices` must hold `3 * n_vertices` doubles and `faces` `3 * n_faces`
 * indices; `out` must be writable.
 */
enum ScStatus sc_mesh_new(const double *vertices,
                          size_t n_vertices,
                          const uint32_t *faces,
                          size_t n_faces,
                          struct ScMesh **out);

/**
 * Extracts the `iso` level set of `grid`. An empty grid yields an empty mesh.
 *
 * # Safety
 * `grid` must be a live handle; `out` must be writable.
 */
enum ScStatus sc_marching_cubes(const struct ScVoxelGrid *grid, double iso, struct ScMesh **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_mesh_read_obj(const char *path, struct ScMesh **out);

/**
 * # Safety
 * `mesh` must be a live handle and `path` a NUL-terminated string.
 */
enum ScStatus sc_mesh_write_obj(const struct ScMesh *mesh, const char *path);

/**
 * Vertex count, or 0 for NULL.
 *
 * # Safety
 * `mesh` must be NULL or a live handle.
 */
size_t sc_mesh_vertex_count(const struct ScMesh *mesh);

/**
 * Face count, or 0 for NULL.
 *
 * # Safety
 * `mesh` must be NULL or a live handle.
 */
size_t sc_mesh_face_count(const struct ScMesh *mesh);

/**
 * Copies vertices as xyz triples. `capacity` counts doubles.
 *
 * # Safety
 * `buffer` must have room for `capacity` doubles.
 */
enum ScStatus sc_mesh_copy_vertices(const struct ScMesh *mesh, double *buffer, size_t capacity);

/**
 * Copies faces as index triples. `capacity` counts indices.
 *
 * # Safety
 * `buffer` must have room for `capacity` indices.
 */
enum ScStatus sc_mesh_copy_faces(const struct ScMesh *mesh, uint32_t *buffer, size_t capacity);

/**
 * # Safety
 * `mesh` must be a live handle; `out` must be writable.
 */
enum ScStatus sc_mesh_diagnostics(const struct ScMesh *mesh, struct ScMeshDiagnostics *out);

/**
 * # Safety
 * `mesh` must be NULL or a live handle.
 */
void sc_mesh_free(struct ScMesh *mesh);

/**
 * Row-major coverage values in [0, 1].
 *
 * # Safety
 * `values` must hold `width * height` doubles; `out` must be writable.
 */
enum ScStatus sc_silhouette_new(uint32_t width,
                                uint32_t height,
                                const double *values,
                                struct ScSilhouette **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_silhouette_read_pgm(const char *path, struct ScSilhouette **out);

/**
 * Binary silhouette with near/far clipping.
 *
 * # Safety
 * `mesh` and `camera` must be valid; `out` must be writable.
 */
enum ScStatus sc_rasterize_silhouette(const struct ScMesh *mesh,
                                      struct ScViewpoint viewpoint,
                                      const struct ScCamera *camera,
                                      struct ScSilhouette **out);

/**
 * Soft silhouette at the given sharpness.
 *
 * # Safety
 * `mesh` and `camera` must be valid; `out` must be writable.
 */
enum ScStatus sc_soft_silhouette(const struct ScMesh *mesh,
                                 struct ScViewpoint viewpoint,
                                 const struct ScCamera *camera,
                                 double sharpness,
                                 struct ScSilhouette **out);

/**
 * # Safety
 * `sil` must be NULL or a live handle.
 */
uint32_t sc_silhouette_width(const struct ScSilhouette *sil);

/**
 * # Safety
 * `sil` must be NULL or a live handle.
 */
uint32_t sc_silhouette_height(const struct ScSilhouette *sil);

/**
 * # Safety
 * `buffer` must have room for `capacity` doubles.
 */
enum ScStatus sc_silhouette_copy_values(const struct ScSilhouette *sil,
                                        double *buffer,
                                        size_t capacity);

/**
 * # Safety
 * `sil` must be NULL or a live handle.
 */
void sc_silhouette_free(struct ScSilhouette *sil);

/**
 * Gradient of the soft silhouette loss per degree of azimuth and elevation.
 *
 * # Safety
 * Handles and pointers must be valid; both outputs must be writable.
 */
enum ScStatus sc_pose_gradient(const struct ScMesh *mesh,
                               struct ScViewpoint viewpoint,
                               const struct ScCamera *camera,
                               const struct ScSilhouette *target,
                               const struct ScOptimizerSettings *settings,
                               double *out_d_azimuth,
                               double *out_d_elevation);

/**
 * Refines `init` against `target`. The result is the visited pose with the
 * lowest hard-silhouette loss.
 *
 * # Safety
 * Handles and pointers must be valid; `out` must be writable.
 */
enum ScStatus sc_finetune_viewpoint(const struct ScMesh *mesh,
                                    const struct ScSilhouette *target,
                                    struct ScViewpoint init,
                                    const struct ScCamera *camera,
                                    const struct ScOptimizerSettings *settings,
                                    struct ScPoseResult *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_embedding_db_read(const char *path, struct ScEmbeddingDb **out);

/**
 * # Safety
 * `db` must be NULL or a live handle.
 */
void sc_embedding_db_free(struct ScEmbeddingDb *db);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_dense_embedding_read(const char *path, struct ScDenseEmbedding **out);

/**
 * # Safety
 * `dense` must be NULL or a live handle.
 */
void sc_dense_embedding_free(struct ScDenseEmbedding *dense);

/**
 * Places every database semantic id on the dense sample with the nearest
 * embedding.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum ScStatus sc_transfer_keypoints(const struct ScDenseEmbedding *dense,
                                    const struct ScEmbeddingDb *db,
                                    enum ScNnMode mode,
                                    bool brute_force,
                                    struct ScKeypoints **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_keypoints_read(const char *path, struct ScKeypoints **out);

/**
 * # Safety
 * `kps` must be a live handle and `path` a NUL-terminated string.
 */
enum ScStatus sc_keypoints_write(const struct ScKeypoints *kps, const char *path);

/**
 * # Safety
 * `kps` must be NULL or a live handle.
 */
size_t sc_keypoints_count(const struct ScKeypoints *kps);

/**
 * # Safety
 * `kps` must be a live handle; `out` must be writable.
 */
enum ScStatus sc_keypoints_get(const struct ScKeypoints *kps, size_t index, struct ScKeypoint *out);

/**
 * Projects keypoints and marks visibility against the mesh's z-buffer.
 *
 * # Safety
 * Handles and pointers must be valid; `out` must be writable.
 */
enum ScStatus sc_project_keypoints(const struct ScKeypoints *kps,
                                   const struct ScMesh *mesh,
                                   struct ScViewpoint viewpoint,
                                   const struct ScCamera *camera,
                                   double depth_eps,
                                   struct ScKeypoints **out);

/**
 * # Safety
 * `kps` must be NULL or a live handle.
 */
void sc_keypoints_free(struct ScKeypoints *kps);

/**
 * True iff the two pixels are within `alpha * max(width, height)`.
 */
bool sc_pck_correct(double predicted_x,
                    double predicted_y,
                    double truth_x,
                    double truth_y,
                    double alpha,
                    double width,
                    double height);

/**
 * Mean PCK over a JSON file of evaluation records.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_mean` must be writable.
 */
enum ScStatus sc_evaluate_records(const char *path,
                                  double alpha,
                                  enum ScThresholdMode mode,
                                  enum ScWeighting weighting,
                                  double *out_mean);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMCYCLE_H */
