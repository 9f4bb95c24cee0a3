#ifndef QVITERBI_H
#define QVITERBI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum QvStatus {
  QV_STATUS_OK = 0,
  QV_STATUS_NULL_POINTER = 1,
  QV_STATUS_INVALID_ARGUMENT = 2,
  QV_STATUS_SIZE_LIMIT = 3,
  QV_STATUS_DECODE_FAILURE = 4,
  QV_STATUS_BUFFER_TOO_SMALL = 5,
  QV_STATUS_PANIC = 6,
} QvStatus;

/**
 * Opaque convolutional code.
 */
typedef struct QvCode QvCode;

/**
 * Opaque set of admissible trellis paths for one received word.
 */
typedef struct QvPathSpace QvPathSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *qv_last_error_message(void);

/**
 * Parses a code such as `"1,2,2;5,7"` (octal generators).
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` writable.
 */
enum QvStatus qv_code_new(const char *spec, struct QvCode **out);

/**
 * # Safety
 * `code` must be null or a handle from [`qv_code_new`] not yet freed.
 */
void qv_code_free(struct QvCode *code);

/**
 * Number of encoder states.
 *
 * # Safety
 * `code` must be a live handle and `out` writable.
 */
enum QvStatus qv_code_num_states(const struct QvCode *code, size_t *out);

/**
 * Encodes `message_len` message bits from the all-zero state.
 *
 * # Safety
 * Buffers must be valid for their stated lengths.
 */
enum QvStatus qv_code_encode(const struct QvCode *code,
                             const uint8_t *message,
                             size_t message_len,
                             uint8_t *out,
                             size_t out_cap,
                             size_t *out_len);

/**
 * Classical Viterbi decoding from the all-zero state.
 *
 * # Safety
 * Buffers must be valid for their stated lengths; `metric` writable.
 */
enum QvStatus qv_viterbi_decode(const struct QvCode *code,
                                const uint8_t *received,
                                size_t received_len,
                                uint8_t *message_out,
                                size_t message_cap,
                                size_t *message_len,
                                uint32_t *metric);

/**
 * Enumerates the admissible paths for `received` from the all-zero state.
 *
 * # Safety
 * `code` must be a live handle, `received` valid for `received_len` bytes.
 */
enum QvStatus qv_path_space_new(const struct QvCode *code,
                                const uint8_t *received,
                                size_t received_len,
                                struct QvPathSpace **out);

/**
 * # Safety
 * `ps` must be null or a handle from [`qv_path_space_new`] not yet freed.
 */
void qv_path_space_free(struct QvPathSpace *ps);

/**
 * Number of admissible paths.
 *
 * # Safety
 * `ps` must be a live handle and `out` writable.
 */
enum QvStatus qv_path_space_len(const struct QvPathSpace *ps, size_t *out);

/**
 * Amplifies with phase unit `omega` for `iterations` rounds; reports the
 * probability of the classical optimum and the most probable path index.
 *
 * # Safety
 * `ps` must be a live handle; out-pointers writable.
 */
enum QvStatus qv_run_qva(const struct QvPathSpace *ps,
                         double omega,
                         size_t iterations,
                         double *prob_top,
                         size_t *top_index);

/**
 * Phase unit maximizing the probability of the classical optimum.
 *
 * # Safety
 * `ps` must be a live handle; out-pointers writable.
 */
enum QvStatus qv_sweep_omega(const struct QvPathSpace *ps,
                             size_t iterations,
                             double grid,
                             double *omega_star,
                             double *prob);

/**
 * Trials needed so that the mode is wrong with probability at most
 * `target_failure` at depth `steps`.
 *
 * # Safety
 * `out` must be writable.
 */
enum QvStatus qv_required_trials(size_t steps, double e0, double target_failure, uint64_t *out);

/**
 * Probability of `target` after one marking `e^{i angles[j]}` and one diffusion.
 *
 * # Safety
 * `angles` must be valid for `len` doubles; `out` writable.
 */
enum QvStatus qv_single_iteration_prob(const double *angles,
                                       size_t len,
                                       size_t target,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QVITERBI_H */
