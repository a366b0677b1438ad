#ifndef SAWB_H
#define SAWB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SawbStatus {
  SAWB_STATUS_OK = 0,
  SAWB_STATUS_NULL_POINTER = 1,
  SAWB_STATUS_INVALID_ARGUMENT = 2,
  SAWB_STATUS_INVALID_UTF8 = 3,
  SAWB_STATUS_PARSE_ERROR = 4,
  SAWB_STATUS_CONFIG_REJECTED = 5,
  SAWB_STATUS_STAGE_FAILED = 6,
  SAWB_STATUS_BUDGET_EXCEEDED = 7,
  SAWB_STATUS_PANIC = 8,
} SawbStatus;

/**
 * A solver certificate.
 */
typedef struct SawbCertificate SawbCertificate;

/**
 * A group model with its congruence level.
 */
typedef struct SawbGroup SawbGroup;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *sawb_last_error_message(void);

/**
 * `SL2` with congruence level `level >= 1`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum SawbStatus sawb_group_new_sl2(uint64_t level, struct SawbGroup **out);

/**
 * Norm-one group of the quaternion algebra `(a, b)` with level `level`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum SawbStatus sawb_group_new_quat(int64_t a, int64_t b, uint64_t level, struct SawbGroup **out);

/**
 * # Safety
 * `group` must be null or a handle from a `sawb_group_new_*` call that has
 * not been freed.
 */
void sawb_group_free(struct SawbGroup *group);

/**
 * Number of elements of the level subgroup with height `< height`.
 *
 * # Safety
 * `group` must be a live handle and `out` valid for writing.
 */
enum SawbStatus sawb_count_ball(const struct SawbGroup *group, uint64_t height, uint64_t *out);

/**
 * Fundamental solution of `u^2 - d v^2 = 1`.
 *
 * # Safety
 * `out_u` and `out_v` must be valid for writing.
 */
enum SawbStatus sawb_pell_fundamental(uint64_t d, uint64_t *out_u, uint64_t *out_v);

/**
 * Run the solver on a JSON config.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` valid for writing.
 */
enum SawbStatus sawb_solve_json(const char *config_json, struct SawbCertificate **out);

/**
 * Parse a certificate.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid for writing.
 */
enum SawbStatus sawb_certificate_from_json(const char *json, struct SawbCertificate **out);

/**
 * Serialize a certificate; free the string with `sawb_string_free`.
 *
 * # Safety
 * `cert` must be a live handle and `out` valid for writing.
 */
enum SawbStatus sawb_certificate_to_json(const struct SawbCertificate *cert, char **out);

/**
 * Recheck a certificate; `*valid` is set to 1 when every check passes.
 *
 * # Safety
 * `cert` must be a live handle and `valid` valid for writing.
 */
enum SawbStatus sawb_certificate_verify(const struct SawbCertificate *cert, int32_t *valid);

/**
 * # Safety
 * `cert` must be null or a live certificate handle.
 */
void sawb_certificate_free(struct SawbCertificate *cert);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void sawb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAWB_H */
