#ifndef FUSIONKIT_H
#define FUSIONKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FkStatus {
  FK_STATUS_OK = 0,
  FK_STATUS_NULL_ARGUMENT = 1,
  FK_STATUS_PARAMETER = 2,
  FK_STATUS_FORMAT = 3,
  FK_STATUS_IO = 4,
  FK_STATUS_UNANCHORED = 5,
  FK_STATUS_NOT_CONVERGED = 6,
  FK_STATUS_NUMERICAL = 7,
  FK_STATUS_PANIC = 8,
} FkStatus;

/**
 * Evaluation crop selector.
 */
typedef enum FkCrop {
  FK_CROP_NONE = 0,
  FK_CROP_EIGEN = 1,
} FkCrop;

/**
 * Opaque depth map handle.
 */
typedef struct FkDepthMap FkDepthMap;

/**
 * Opaque pseudo-dense representation handle.
 */
typedef struct FkPdr FkPdr;

/**
 * Opaque point cloud handle (camera frame unless loaded from a scan).
 */
typedef struct FkPointCloud FkPointCloud;

/**
 * Pinhole intrinsics in pixels.
 */
typedef struct FkIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
} FkIntrinsics;

typedef struct FkMetrics {
  double abs_rel;
  double sq_rel;
  double rmse;
  double rmse_log;
  double delta1;
  double delta2;
  double delta3;
  double rmse_mm;
  double irmse;
  double imae;
  size_t n_valid;
} FkMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call
 * on the same thread.
 */
const char *fk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fk_version(void);

/**
 * Creates a depth map from `width*height` row-major meters (0 = invalid).
 *
 * # Safety
 * `data` must point to `width*height` readable doubles; `out` must be writable.
 */
enum FkStatus fk_depth_new(size_t width,
                           size_t height,
                           const double *data,
                           struct FkDepthMap **out);

/**
 * # Safety
 * `depth` must be null or a handle from this library, not used afterwards.
 */
void fk_depth_free(struct FkDepthMap *depth);

/**
 * # Safety
 * `depth` must be a live handle.
 */
size_t fk_depth_width(const struct FkDepthMap *depth);

/**
 * # Safety
 * `depth` must be a live handle.
 */
size_t fk_depth_height(const struct FkDepthMap *depth);

/**
 * Row-major depth values, valid while the handle lives.
 *
 * # Safety
 * `depth` must be a live handle.
 */
const double *fk_depth_data(const struct FkDepthMap *depth);

/**
 * Loads a 16-bit KITTI depth PNG (meters × 256).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FkStatus fk_depth_load_png(const char *path, struct FkDepthMap **out);

/**
 * # Safety
 * `depth` must be a live handle and `path` a NUL-terminated string.
 */
enum FkStatus fk_depth_save_png(const struct FkDepthMap *depth, const char *path);

/**
 * Creates a cloud from `n` xyz triples (meters).
 *
 * # Safety
 * `xyz` must point to `3*n` readable doubles; `out` must be writable.
 */
enum FkStatus fk_cloud_new(const double *xyz, size_t n, struct FkPointCloud **out);

/**
 * Loads a KITTI velodyne scan (points stay in the LiDAR frame).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FkStatus fk_cloud_load_velodyne(const char *path, struct FkPointCloud **out);

/**
 * # Safety
 * `cloud` must be a live handle and `path` a NUL-terminated string.
 */
enum FkStatus fk_cloud_save_velodyne(const struct FkPointCloud *cloud, const char *path);

/**
 * # Safety
 * `cloud` must be a live handle.
 */
size_t fk_cloud_len(const struct FkPointCloud *cloud);

/**
 * Copies point `index` into `xyz[3]`.
 *
 * # Safety
 * `cloud` must be a live handle and `xyz` writable for 3 doubles.
 */
enum FkStatus fk_cloud_point(const struct FkPointCloud *cloud, size_t index, double *xyz);

/**
 * # Safety
 * `cloud` must be null or a handle from this library, not used afterwards.
 */
void fk_cloud_free(struct FkPointCloud *cloud);

/**
 * Builds the pseudo-dense representation of camera-frame points.
 *
 * # Safety
 * Pointers must be live handles / readable structs; `out` must be writable.
 */
enum FkStatus fk_pdr_generate(const struct FkPointCloud *cloud,
                              const struct FkIntrinsics *k,
                              size_t width,
                              size_t height,
                              double radius,
                              struct FkPdr **out);

/**
 * Depth channel as a new handle owned by the caller.
 *
 * # Safety
 * `pdr` must be a live handle; `out` must be writable.
 */
enum FkStatus fk_pdr_depth(const struct FkPdr *pdr, struct FkDepthMap **out);

/**
 * Row-major confidence channel, valid while the handle lives.
 *
 * # Safety
 * `pdr` must be a live handle.
 */
const double *fk_pdr_confidence(const struct FkPdr *pdr);

/**
 * # Safety
 * `pdr` must be null or a handle from this library, not used afterwards.
 */
void fk_pdr_free(struct FkPdr *pdr);

/**
 * Fraction of pixels hit by at least one projected point.
 *
 * # Safety
 * Pointers must be live handles / readable structs; `out` must be writable.
 */
enum FkStatus fk_coverage_fraction(const struct FkPointCloud *cloud,
                                   const struct FkIntrinsics *k,
                                   size_t width,
                                   size_t height,
                                   double *out);

/**
 * Depth metrics over `0 < gt ≤ cap` inside the crop.
 *
 * # Safety
 * `pred`, `gt` must be live handles; `out` must be writable.
 */
enum FkStatus fk_depth_metrics(const struct FkDepthMap *pred,
                               const struct FkDepthMap *gt,
                               double cap,
                               enum FkCrop crop,
                               struct FkMetrics *out);

/**
 * Graph-based depth correction of `depth` anchored to camera-frame `cloud`.
 *
 * `anchor_strength` may be `INFINITY` for hard anchors.
 *
 * # Safety
 * Pointers must be live handles / readable structs; `out` must be writable.
 */
enum FkStatus fk_gdc_refine(const struct FkDepthMap *depth,
                            const struct FkPointCloud *cloud,
                            const struct FkIntrinsics *k,
                            size_t neighbors,
                            size_t stride,
                            double anchor_strength,
                            struct FkDepthMap **out);

/**
 * Scale-invariant loss `λ·√(η·Si)` over `n` depth pairs; `grad` (nullable) receives ∂L/∂y.
 *
 * # Safety
 * `y`, `y_star` must hold `n` doubles, `grad` (if non-null) be writable for `n`, `loss` writable.
 */
enum FkStatus fk_scale_invariant_loss(const double *y,
                                      const double *y_star,
                                      size_t n,
                                      double lambda,
                                      double eta,
                                      double *loss,
                                      double *grad);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSIONKIT_H */
