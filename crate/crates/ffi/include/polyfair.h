#ifndef POLYFAIR_H
#define POLYFAIR_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum PolyfairStatus {
  POLYFAIR_STATUS_OK = 0,
  /**
   * A pointer argument was null or otherwise unusable.
   */
  POLYFAIR_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Malformed input: JSON, schema, or model structure.
   */
  POLYFAIR_STATUS_PARSE = 2,
  /**
   * Problem size exceeds a configured ceiling (grid cells, branches,
   * categorical assignments).
   */
  POLYFAIR_STATUS_INFEASIBLE = 3,
  /**
   * LP/geometry breakdown or divergent computation.
   */
  POLYFAIR_STATUS_NUMERICAL = 4,
  /**
   * A panic was caught at the boundary.
   */
  POLYFAIR_STATUS_PANIC = 5,
} PolyfairStatus;

/**
 * Opaque handle to a loaded model (network + feature schema).
 */
typedef struct PolyfairModel PolyfairModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread, or null if the last call
 * succeeded. The pointer stays valid until the next failing call on the same
 * thread.
 */
const char *polyfair_last_error(void);

/**
 * Loads a model document (JSON with `schema` and `layers`) into a handle.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PolyfairStatus polyfair_model_load_json(const char *json, struct PolyfairModel **out);

/**
 * Loads a model document from a file path.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PolyfairStatus polyfair_model_load_file(const char *path, struct PolyfairModel **out);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must have come from a load call and not been freed before.
 */
void polyfair_model_free(struct PolyfairModel *model);

/**
 * Encoded input width the model expects.
 *
 * # Safety
 * `model` must be a live handle; `out` a valid pointer.
 */
enum PolyfairStatus polyfair_model_input_dim(const struct PolyfairModel *model, uintptr_t *out);

/**
 * Raw logit of the model on an encoded input of length `len`.
 *
 * # Safety
 * `model` must be a live handle, `x` must point to `len` doubles, and `out`
 * must be a valid pointer.
 */
enum PolyfairStatus polyfair_model_forward(const struct PolyfairModel *model,
                                           const double *x,
                                           uintptr_t len,
                                           double *out);

/**
 * Binary decision (1 = accept) on an encoded input of length `len`.
 *
 * # Safety
 * As for `polyfair_model_forward`.
 */
enum PolyfairStatus polyfair_model_decide(const struct PolyfairModel *model,
                                          const double *x,
                                          uintptr_t len,
                                          uint8_t *out);

/**
 * Runs the full exact verification pipeline against a dataset document
 * (JSON) and returns the fairness report as a newly allocated JSON string in
 * `out_json`; free it with `polyfair_string_free`.
 *
 * # Safety
 * `model` must be a live handle, `dataset_json` a valid NUL-terminated
 * string, and `out_json` a valid pointer.
 */
enum PolyfairStatus polyfair_verify(const struct PolyfairModel *model,
                                    const char *dataset_json,
                                    uintptr_t grid_bins,
                                    char **out_json);

/**
 * Frees a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must have been returned by this library and not freed before.
 */
void polyfair_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYFAIR_H */
