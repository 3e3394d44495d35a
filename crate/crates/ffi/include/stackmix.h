#ifndef STACKMIX_H
#define STACKMIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum StackmixStatus {
  StackmixStatus_Ok = 0,
  StackmixStatus_NullArgument = 1,
  StackmixStatus_InvalidUtf8 = 2,
  StackmixStatus_LoadFailed = 3,
  StackmixStatus_PredictFailed = 4,
  StackmixStatus_BufferTooSmall = 5,
  StackmixStatus_IndexOutOfBounds = 6,
} StackmixStatus;

/**
 * Opaque handle to a loaded model or ensemble.
 */
typedef struct StackmixHandle StackmixHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *stackmix_version(void);

/**
 * Copy the most recent error message on this thread into `buf`
 * (NUL-terminated, truncation reported as `BufferTooSmall`).
 */
enum StackmixStatus stackmix_last_error(char *buf, uintptr_t buf_len);

/**
 * Load a saved model or ensemble file; the format is detected from the
 * file's magic bytes. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum StackmixStatus stackmix_load(const char *path, struct StackmixHandle **out);

/**
 * Release a handle returned by `stackmix_load`. A null handle is a no-op.
 *
 * # Safety
 * `handle` must be null or a pointer from `stackmix_load` not yet freed.
 */
void stackmix_free(struct StackmixHandle *handle);

/**
 * Number of output classes, or 0 if `handle` is null.
 *
 * # Safety
 * `handle` must be null or a live handle.
 */
uintptr_t stackmix_num_classes(const struct StackmixHandle *handle);

/**
 * Copy the name of class `index` into `buf` as a NUL-terminated string.
 *
 * # Safety
 * `handle` must be a live handle and `buf` writable for `buf_len` bytes.
 */
enum StackmixStatus stackmix_label_name(const struct StackmixHandle *handle,
                                        uintptr_t index,
                                        char *buf,
                                        uintptr_t buf_len);

/**
 * Classify one text. Writes the full probability row into `probs`
 * (`probs_len` must equal `stackmix_num_classes`) and the winning class
 * index into `label_index`.
 *
 * # Safety
 * `handle` must be a live handle, `text` a valid NUL-terminated string,
 * `probs` writable for `probs_len` doubles, `label_index` a valid pointer.
 */
enum StackmixStatus stackmix_predict(const struct StackmixHandle *handle,
                                     const char *text,
                                     double *probs,
                                     uintptr_t probs_len,
                                     uintptr_t *label_index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STACKMIX_H */
