/* C API for the cinerec dynamic MRI reconstruction toolkit. */

#ifndef CINEREC_H
#define CINEREC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; nonzero values match the CLI exit-code convention.
 */
typedef enum CxrStatus {
  CxrStatus_Ok = 0,
  CxrStatus_NullArgument = 1,
  CxrStatus_Config = 2,
  CxrStatus_Data = 3,
  CxrStatus_Numerical = 4,
} CxrStatus;

/**
 * Opaque trained-model handle.
 */
typedef struct CxrModel CxrModel;

/**
 * Opaque tensor handle (any CXT dtype/rank).
 */
typedef struct CxrTensor CxrTensor;

/**
 * Message for the most recent failure on this thread. Valid until the next
 * failing call; never null.
 */
const char *cxr_last_error(void);

/**
 * Read a CXT file into a new tensor handle; returns null on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct CxrTensor *cxr_tensor_read(const char *path);

/**
 * Write a tensor handle to a CXT file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string, `t` a live tensor handle.
 */
enum CxrStatus cxr_tensor_write(const char *path, const struct CxrTensor *t);

/**
 * # Safety
 * `t` must be a live tensor handle or null.
 */
void cxr_tensor_free(struct CxrTensor *t);

/**
 * Number of dimensions, or -1 for null.
 *
 * # Safety
 * `t` must be a live tensor handle or null.
 */
int cxr_tensor_ndim(const struct CxrTensor *t);

/**
 * CXT dtype code (0 real32, 1 real64, 2 complex64, 3 complex128), -1 for null.
 *
 * # Safety
 * `t` must be a live tensor handle or null.
 */
int cxr_tensor_dtype(const struct CxrTensor *t);

/**
 * Copy up to `max_dims` dimension sizes into `out`.
 *
 * # Safety
 * `t` must be a live tensor handle; `out` must point to `max_dims` u64s.
 */
enum CxrStatus cxr_tensor_dims(const struct CxrTensor *t, uint64_t *out, size_t max_dims);

/**
 * Generate a variable-density Latin-Hypercube mask as a real32 (T, W) tensor;
 * null on failure.
 */
struct CxrTensor *cxr_mask_generate(size_t w_pe,
                                    size_t t,
                                    double accel,
                                    size_t n_acs,
                                    double density_decay,
                                    uint64_t seed);

/**
 * Load a model checkpoint (`<base>.cxt` + `<base>.hdr`); null on failure.
 *
 * # Safety
 * `base` must be a valid NUL-terminated string.
 */
struct CxrModel *cxr_model_load(const char *base);

/**
 * # Safety
 * `m` must be a live model handle or null.
 */
void cxr_model_free(struct CxrModel *m);

/**
 * Total trainable parameter count, or 0 for null.
 *
 * # Safety
 * `m` must be a live model handle or null.
 */
size_t cxr_model_param_count(const struct CxrModel *m);

/**
 * Zero-filled reconstruction: RSS of the per-coil inverse FFT. Input is a
 * complex128 (T, C, H, W) k-space tensor; output real64 (T, H, W).
 *
 * # Safety
 * `k_us` must be a live tensor handle.
 */
struct CxrTensor *cxr_recon_zf(const struct CxrTensor *k_us);

/**
 * Compressed-sensing reconstruction with ACS-estimated sensitivities and
 * default regularization weights; `max_admm_iters` 0 keeps the default 100.
 *
 * # Safety
 * `k_us` and `mask` must be live tensor handles.
 */
struct CxrTensor *cxr_recon_cs(const struct CxrTensor *k_us,
                               const struct CxrTensor *mask,
                               size_t acs_width,
                               size_t max_admm_iters);

/**
 * Res-CRNN reconstruction with a loaded model.
 *
 * # Safety
 * `k_us`, `mask` and `model` must be live handles.
 */
struct CxrTensor *cxr_recon_crnn(const struct CxrTensor *k_us,
                                 const struct CxrTensor *mask,
                                 const struct CxrModel *model);

/**
 * Mean SSIM, PSNR (dB) and NMSE of `a` against reference `b`, both real64
 * (T, H, W) magnitude tensors. Results written to `out[0..3]`.
 *
 * # Safety
 * `a` and `b` must be live tensor handles; `out` must point to 3 doubles.
 */
enum CxrStatus cxr_metrics(const struct CxrTensor *a, const struct CxrTensor *b, double *out);

#endif /* CINEREC_H */
