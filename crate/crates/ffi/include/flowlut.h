#ifndef FLOWLUT_H
#define FLOWLUT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlowlutPreset {
  FLOWLUT_PRESET_FULL = 0,
  FLOWLUT_PRESET_TOY = 1,
} FlowlutPreset;

/**
 * Result code of every fallible call.
 */
typedef enum FlowlutStatus {
  FLOWLUT_STATUS_OK = 0,
  FLOWLUT_STATUS_NULL_POINTER = 1,
  /**
   * A size, index or configuration value was rejected.
   */
  FLOWLUT_STATUS_INVALID_ARGUMENT = 2,
  FLOWLUT_STATUS_IO = 3,
  /**
   * Malformed checkpoint, image or `.cube` data.
   */
  FLOWLUT_STATUS_PARSE = 4,
  /**
   * Training or numerical failure.
   */
  FLOWLUT_STATUS_COMPUTE = 5,
  /**
   * A Rust panic was caught; the handle should be discarded.
   */
  FLOWLUT_STATUS_INTERNAL = 6,
} FlowlutStatus;

/**
 * Opaque model handle.
 */
typedef struct FlowlutModel FlowlutModel;

/**
 * Scalar parameter counts by component.
 */
typedef struct FlowlutParamCounts {
  uint64_t luts;
  uint64_t weight_net;
  uint64_t flow_net;
  uint64_t total;
} FlowlutParamCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread, or an empty
 * string. The pointer stays valid until the next call on this thread.
 */
const char *flowlut_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *flowlut_version(void);

/**
 * Builds a freshly initialized model. `num_luts` and `flow_steps` of 0 keep
 * the preset's values.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum FlowlutStatus flowlut_model_new(enum FlowlutPreset preset,
                                     uint32_t num_luts,
                                     uint32_t flow_steps,
                                     uint64_t seed,
                                     struct FlowlutModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FlowlutStatus flowlut_model_load(const char *path, struct FlowlutModel **out);

/**
 * Writes the model and its optimizer state as a checkpoint.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum FlowlutStatus flowlut_model_save(const struct FlowlutModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void flowlut_model_free(struct FlowlutModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum FlowlutStatus flowlut_param_counts(const struct FlowlutModel *model,
                                        struct FlowlutParamCounts *out);

/**
 * Number of LUTs in the bank, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uint32_t flowlut_num_luts(const struct FlowlutModel *model);

/**
 * Enhances an interleaved 8-bit RGB image. `input` and `output` each hold
 * `3 * width * height` bytes and may be the same buffer.
 *
 * # Safety
 * `model` must be a live handle; the buffers must be valid for that length.
 */
enum FlowlutStatus flowlut_enhance_rgb8(const struct FlowlutModel *model,
                                        uint32_t width,
                                        uint32_t height,
                                        const uint8_t *input,
                                        uint8_t *output);

/**
 * Enhances a channel-planar `3 × height × width` float image in `[0, 1]`.
 * Output is clamped to `[0, 1]`; the buffers may alias.
 *
 * # Safety
 * `model` must be a live handle; the buffers must hold `3 * width * height`
 * floats.
 */
enum FlowlutStatus flowlut_enhance_planar_f32(const struct FlowlutModel *model,
                                              uint32_t width,
                                              uint32_t height,
                                              const float *input,
                                              float *output);

/**
 * Writes LUT `index` of the bank as an Adobe `.cube` file.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum FlowlutStatus flowlut_export_cube(const struct FlowlutModel *model,
                                       uint32_t index,
                                       const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWLUT_H */
