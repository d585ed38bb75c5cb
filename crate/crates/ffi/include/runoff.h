#ifndef RUNOFF_H
#define RUNOFF_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_ARGUMENT = 2,
  RF_STATUS_IO = 3,
  RF_STATUS_FORMAT = 4,
  /**
   * The metric has no value for this input, e.g. constant observations.
   */
  RF_STATUS_UNDEFINED = 5,
  RF_STATUS_PANIC = 6,
} RfStatus;

/**
 * Trained model with its input normalization.
 */
typedef struct RfModel RfModel;

typedef struct RfKge {
  double kge;
  double r;
  double alpha;
  double beta;
} RfKge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the calling thread's last failure, or null. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *rf_last_error(void);

/**
 * Static, nul-terminated.
 */
const char *rf_version(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum RfStatus rf_checkpoint_load(const char *path, struct RfModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`rf_checkpoint_load`] and not be used afterwards.
 */
void rf_model_free(struct RfModel *model);

/**
 * Input columns per day, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rf_model_input_dim(const struct RfModel *model);

/**
 * Lookback window in days, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rf_model_seq_len(const struct RfModel *model);

/**
 * Discharge in mm/day on the last day of each window.
 *
 * `x` is row-major `[batch, seq_len, input_dim]` in physical units, forcing
 * columns then static attributes, as in training; `NaN` marks a missing
 * value. `out` receives `batch` values.
 *
 * # Safety
 * `model` must be a live handle, `x` valid for `batch * seq_len * input_dim`
 * reads and `out` for `batch` writes.
 */
enum RfStatus rf_model_predict(const struct RfModel *model,
                               const double *x,
                               size_t batch,
                               size_t seq_len,
                               size_t input_dim,
                               double *out);

/**
 * Nash-Sutcliffe efficiency over the days with observed (non-NaN) `obs`.
 *
 * # Safety
 * `obs` and `sim` must be valid for `n` reads, `out` for one write.
 */
enum RfStatus rf_nse(const double *obs, const double *sim, size_t n, double *out);

/**
 * Kling-Gupta efficiency and its components.
 *
 * # Safety
 * `obs` and `sim` must be valid for `n` reads, `out` for one write.
 */
enum RfStatus rf_kge(const double *obs, const double *sim, size_t n, struct RfKge *out);

/**
 * Percent bias of the top `h_frac` of the flow-duration curve.
 *
 * # Safety
 * `obs` and `sim` must be valid for `n` reads, `out` for one write.
 */
enum RfStatus rf_fhv(const double *obs, const double *sim, size_t n, double h_frac, double *out);

/**
 * Percent bias of the log low-flow segment, the bottom `l_frac` of the
 * flow-duration curve; flows are clamped at `floor` first.
 *
 * # Safety
 * `obs` and `sim` must be valid for `n` reads, `out` for one write.
 */
enum RfStatus rf_flv(const double *obs,
                     const double *sim,
                     size_t n,
                     double l_frac,
                     double floor,
                     double *out);

/**
 * Runs the linear reservoir over `n` days of precipitation. `discharge`
 * receives `n` values; `storage`, if not null, receives `n + 1`.
 *
 * # Safety
 * `precip` must be valid for `n` reads, `discharge` for `n` writes and a
 * non-null `storage` for `n + 1` writes.
 */
enum RfStatus rf_simulate_reservoir(const double *precip,
                                    size_t n,
                                    double k,
                                    double et_rate,
                                    double s0,
                                    double *discharge,
                                    double *storage);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RUNOFF_H */
