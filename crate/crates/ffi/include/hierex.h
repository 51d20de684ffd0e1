#ifndef HIEREX_H
#define HIEREX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum HxStatus {
  HX_STATUS_OK = 0,
  HX_STATUS_NULL_ARGUMENT = 1,
  HX_STATUS_INVALID_UTF8 = 2,
  HX_STATUS_IO = 3,
  HX_STATUS_BAD_CHECKPOINT = 4,
  HX_STATUS_BAD_INPUT = 5,
  HX_STATUS_NUMERIC = 6,
  HX_STATUS_PANIC = 7,
} HxStatus;

/**
 * Opaque loaded checkpoint.
 */
typedef struct HxModel HxModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HxStatus hx_model_load(const char *path, struct HxModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` is null or came from [`hx_model_load`] and was not freed before.
 */
void hx_model_free(struct HxModel *model);

/**
 * Splits `text` into sentences, tokenizes, and writes the extraction record
 * as JSON to `*out_json`.
 *
 * # Safety
 * `model` must be a live handle; `id` and `text` NUL-terminated strings;
 * `out_json` writable.
 */
enum HxStatus hx_model_extract_text(const struct HxModel *model,
                                    const char *id,
                                    const char *text,
                                    char **out_json);

/**
 * Extracts from a pre-tokenized JSON record
 * `{"id": ..., "sentences": [{"tokens": [...]}, ...]}`.
 *
 * # Safety
 * As for [`hx_model_extract_text`].
 */
enum HxStatus hx_model_extract_tokens(const struct HxModel *model,
                                      const char *record_json,
                                      char **out_json);

/**
 * Number of trainable scalars in the model, or 0 for a null handle.
 *
 * # Safety
 * `model` is null or a live handle.
 */
size_t hx_model_param_count(const struct HxModel *model);

/**
 * Runs the toy gradient check in both tagger modes and writes the largest
 * relative error to `*out_max_rel`.
 *
 * # Safety
 * `out_max_rel` must be writable.
 */
enum HxStatus hx_gradcheck(uint64_t seed, double eps, size_t sample, double *out_max_rel);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *hx_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` is null or came from this library and was not freed before.
 */
void hx_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hx_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIEREX_H */
