#ifndef NLSIC_H
#define NLSIC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Modulation families.
 */
typedef enum NlsicFamily {
  NLSIC_FAMILY_PAM = 0,
  NLSIC_FAMILY_ASK = 1,
  NLSIC_FAMILY_SQAM = 2,
} NlsicFamily;

/**
 * Memoryless nonlinearities; `Rapp` takes its smoothness separately.
 */
typedef enum NlsicNonlinearity {
  NLSIC_NONLINEARITY_SLD = 0,
  NLSIC_NONLINEARITY_IDENTITY = 1,
  NLSIC_NONLINEARITY_RAPP = 2,
} NlsicNonlinearity;

/**
 * Result codes of every fallible call.
 */
typedef enum NlsicStatus {
  NLSIC_STATUS_OK = 0,
  NLSIC_STATUS_NULL_POINTER = 1,
  NLSIC_STATUS_INVALID_ARGUMENT = 2,
  NLSIC_STATUS_INFEASIBLE = 3,
  NLSIC_STATUS_IO = 4,
  NLSIC_STATUS_CHECKPOINT = 5,
  NLSIC_STATUS_PANIC = 6,
} NlsicStatus;

/**
 * Opaque discrete channel.
 */
typedef struct NlsicChannel NlsicChannel;

/**
 * Opaque trained network equalizer.
 */
typedef struct NlsicModel NlsicModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t nlsic_last_error(char *buf, size_t len);

/**
 * Short-reach fiber channel of `fiber_length_m` meters with unit noise
 * variance (square-law detection, real noise, two samples per symbol).
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum NlsicStatus nlsic_channel_fiber(double fiber_length_m, struct NlsicChannel **out);

/**
 * Channel from explicit filter taps (odd lengths). `g_im`/`h_im` may be null
 * for real taps; `rapp_p` is used only with the Rapp nonlinearity.
 *
 * # Safety
 * Tap arrays must hold `k_g`/`k_h` values; `out` must be valid.
 */
enum NlsicStatus nlsic_channel_from_taps(const double *g_re,
                                         const double *g_im,
                                         size_t k_g,
                                         const double *h_re,
                                         const double *h_im,
                                         size_t k_h,
                                         size_t n_sim,
                                         size_t n_os,
                                         enum NlsicNonlinearity nonlinearity,
                                         double rapp_p,
                                         double noise_sigma2,
                                         bool noise_real,
                                         struct NlsicChannel **out);

/**
 * Releases a channel; null is ignored.
 *
 * # Safety
 * `ch` must come from a channel constructor and not be used afterwards.
 */
void nlsic_channel_free(struct NlsicChannel *ch);

/**
 * Receiver samples per symbol, or 0 for a null handle.
 *
 * # Safety
 * `ch` must be null or a live channel.
 */
size_t nlsic_channel_samples_per_symbol(const struct NlsicChannel *ch);

/**
 * Symbols each output slot depends on besides its own, or 0 for null.
 *
 * # Safety
 * `ch` must be null or a live channel.
 */
size_t nlsic_channel_memory(const struct NlsicChannel *ch);

/**
 * Gain that sets the average transmit power to `snr_db` (unit noise).
 *
 * # Safety
 * `ch` must be a live channel and `gain` writable.
 */
enum NlsicStatus nlsic_calibrate_gain(const struct NlsicChannel *ch,
                                      enum NlsicFamily family,
                                      size_t m,
                                      double snr_db,
                                      double *gain);

/**
 * Simulates symbol indices `indices[0..n]` and writes `n * N_os` samples.
 * `y_im` may be null when only the real part is wanted.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum NlsicStatus nlsic_simulate(const struct NlsicChannel *ch,
                                enum NlsicFamily family,
                                size_t m,
                                double gain,
                                const uint32_t *indices,
                                size_t n,
                                uint64_t seed,
                                double *y_re,
                                double *y_im);

/**
 * Forward-backward APPs of the stage-`stage` symbols (1-based) of an
 * `n`-symbol block. `known[k]` is the index of an already detected symbol
 * or -1. `memory < 0` uses the full channel memory. Writes
 * `(n / stages) * m` row-major probabilities.
 *
 * # Safety
 * `y_re`/`y_im` hold `n * N_os` values (`y_im` may be null), `known` holds
 * `n`, `apps` holds `(n / stages) * m`.
 */
enum NlsicStatus nlsic_fba_stage(const struct NlsicChannel *ch,
                                 enum NlsicFamily family,
                                 size_t m,
                                 double gain,
                                 const double *y_re,
                                 const double *y_im,
                                 size_t n,
                                 const int32_t *known,
                                 size_t stage,
                                 size_t stages,
                                 int32_t memory,
                                 double *apps);

/**
 * Rate estimate `m + mean log2 Q(true symbol)` clamped to `[0, m]` bits.
 *
 * # Safety
 * `apps` holds `rows * m` values, `truth` holds `rows`.
 */
enum NlsicStatus nlsic_estimate_rate(const double *apps,
                                     size_t rows,
                                     size_t m,
                                     const uint32_t *truth,
                                     double *rate);

/**
 * Loads a trained network checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum NlsicStatus nlsic_model_load(const char *path, struct NlsicModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`nlsic_model_load`] and not be used afterwards.
 */
void nlsic_model_free(struct NlsicModel *model);

/**
 * Number of SIC stages of a model, or 0 for null.
 *
 * # Safety
 * `model` must be null or live.
 */
size_t nlsic_model_stages(const struct NlsicModel *model);

/**
 * Network APPs of the stage-`stage` symbols, laid out as in
 * [`nlsic_fba_stage`]; `stages` must equal the model's stage count.
 *
 * # Safety
 * Same buffer requirements as [`nlsic_fba_stage`] with `N_os` taken from
 * the model.
 */
enum NlsicStatus nlsic_model_stage_apps(const struct NlsicModel *model,
                                        const double *y_re,
                                        const double *y_im,
                                        size_t n,
                                        const int32_t *known,
                                        size_t stage,
                                        size_t stages,
                                        double *apps);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* NLSIC_H */
