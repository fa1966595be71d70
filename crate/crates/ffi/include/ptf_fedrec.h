#ifndef PTF_FEDREC_H
#define PTF_FEDREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PtfStatus {
  PTF_STATUS_OK = 0,
  PTF_STATUS_NULL_POINTER = 1,
  PTF_STATUS_INVALID_ARGUMENT = 2,
  PTF_STATUS_CONFIG = 3,
  PTF_STATUS_PROTOCOL = 4,
  PTF_STATUS_WIRE = 5,
  PTF_STATUS_BUFFER_TOO_SMALL = 6,
  PTF_STATUS_FINISHED = 7,
  PTF_STATUS_PANIC = 8,
} PtfStatus;

/**
 * Opaque simulation handle.
 */
typedef struct PtfWorld PtfWorld;

/**
 * Outcome of one simulated round. Absent values are NaN.
 */
typedef struct PtfRoundStats {
  uint32_t round;
  uint32_t participants;
  double client_loss;
  double server_loss;
  uint64_t uplink_bytes;
  uint64_t downlink_bytes;
  double attack_f1;
} PtfRoundStats;

typedef struct PtfMetrics {
  double recall;
  double ndcg;
  uint32_t users;
} PtfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ptf_version(void);

/**
 * Length in bytes of the last error message on this thread, without the
 * terminating NUL. Zero when there is none.
 */
size_t ptf_last_error_length(void);

/**
 * Copy the last error message into `buf` with a terminating NUL.
 *
 * Returns the number of bytes written excluding the NUL, 0 if there is no
 * error, or -1 if `buf` is null or shorter than the message plus one.
 *
 * # Safety
 * `buf` must be valid for `len` bytes of writes.
 */
ptrdiff_t ptf_last_error_message(char *buf, size_t len);

/**
 * Forget the last error on this thread.
 */
void ptf_clear_error(void);

/**
 * Build a world from a `key = value` configuration document and a seed.
 *
 * # Safety
 * `config` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PtfStatus ptf_world_new(const char *config, uint64_t seed, struct PtfWorld **out);

/**
 * Release a world. Null is ignored.
 *
 * # Safety
 * `world` must come from [`ptf_world_new`] and not be used afterwards.
 */
void ptf_world_free(struct PtfWorld *world);

/**
 * Configured number of rounds.
 *
 * # Safety
 * `world` must be a live handle or null.
 */
size_t ptf_world_rounds(const struct PtfWorld *world);

/**
 * Rounds run so far.
 *
 * # Safety
 * `world` must be a live handle or null.
 */
size_t ptf_world_rounds_completed(const struct PtfWorld *world);

/**
 * Number of users (clients) in the world.
 *
 * # Safety
 * `world` must be a live handle or null.
 */
size_t ptf_world_n_users(const struct PtfWorld *world);

/**
 * Number of catalogue items.
 *
 * # Safety
 * `world` must be a live handle or null.
 */
size_t ptf_world_n_items(const struct PtfWorld *world);

/**
 * Run the next round. Returns `Finished` once every configured round ran.
 *
 * # Safety
 * `world` must be a live handle; `out` may be null.
 */
enum PtfStatus ptf_world_run_round(struct PtfWorld *world, struct PtfRoundStats *out);

/**
 * Rank the test split with the current model.
 *
 * # Safety
 * `world` and `out` must be valid pointers.
 */
enum PtfStatus ptf_world_evaluate(const struct PtfWorld *world, struct PtfMetrics *out);

/**
 * Bytes a user sent and received in a round, zero if it was absent.
 *
 * # Safety
 * `world`, `uplink` and `downlink` must be valid pointers.
 */
enum PtfStatus ptf_world_traffic(const struct PtfWorld *world,
                                 size_t round,
                                 uint32_t user,
                                 uint64_t *uplink,
                                 uint64_t *downlink);

/**
 * Encoded size of a score message carrying `count` triples.
 */
size_t ptf_encoded_len(size_t count);

/**
 * Encode a client upload. On `BufferTooSmall`, `written` holds the size
 * needed.
 *
 * # Safety
 * `items` and `scores` must hold `count` values; `buf` must be valid for
 * `cap` bytes; `written` must be valid.
 */
enum PtfStatus ptf_upload_encode(uint32_t user,
                                 const uint32_t *items,
                                 const double *scores,
                                 size_t count,
                                 uint8_t *buf,
                                 size_t cap,
                                 size_t *written);

/**
 * Decode a client upload into caller buffers of `cap` entries. `count`
 * always receives the number of entries in the message.
 *
 * # Safety
 * `buf` must be valid for `len` bytes; `items` and `scores` for `cap`
 * values; `user` and `count` must be valid.
 */
enum PtfStatus ptf_upload_decode(const uint8_t *buf,
                                 size_t len,
                                 uint32_t *user,
                                 uint32_t *items,
                                 double *scores,
                                 size_t cap,
                                 size_t *count);

/**
 * Encode a server hint. Same conventions as [`ptf_upload_encode`].
 *
 * # Safety
 * As for [`ptf_upload_encode`].
 */
enum PtfStatus ptf_hint_encode(uint32_t user,
                               const uint32_t *items,
                               const double *scores,
                               size_t count,
                               uint8_t *buf,
                               size_t cap,
                               size_t *written);

/**
 * Decode a server hint. Same conventions as [`ptf_upload_decode`].
 *
 * # Safety
 * As for [`ptf_upload_decode`].
 */
enum PtfStatus ptf_hint_decode(const uint8_t *buf,
                               size_t len,
                               uint32_t *user,
                               uint32_t *items,
                               double *scores,
                               size_t cap,
                               size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PTF_FEDREC_H */
