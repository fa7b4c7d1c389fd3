#ifndef GENRET_H
#define GENRET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GenretStrategy {
  GENRET_STRATEGY_REVERSE_ANNEALING = 0,
  GENRET_STRATEGY_GREEDY = 1,
  GENRET_STRATEGY_NUCLEUS = 2,
  GENRET_STRATEGY_BEAM = 3,
} GenretStrategy;

typedef enum GenretStatus {
  GENRET_STATUS_OK = 0,
  GENRET_STATUS_NULL_POINTER = 1,
  GENRET_STATUS_INVALID_UTF8 = 2,
  GENRET_STATUS_IO = 3,
  GENRET_STATUS_PARSE = 4,
  GENRET_STATUS_INTEGRITY = 5,
  GENRET_STATUS_CONTRACT = 6,
  GENRET_STATUS_DEGENERATE = 7,
  GENRET_STATUS_CONFLICT = 8,
  GENRET_STATUS_CONFIG = 9,
  GENRET_STATUS_OUT_OF_RANGE = 10,
  GENRET_STATUS_PANIC = 99,
} GenretStatus;

/**
 * A loaded index. Opaque to C.
 */
typedef struct GenretIndex GenretIndex;

/**
 * A ranked list of documents for one query. Opaque to C.
 */
typedef struct GenretResults GenretResults;

/**
 * Decoder choice and parameters; obtain defaults from
 * [`genret_decoder_config_default`].
 */
typedef struct GenretDecoderConfig {
  enum GenretStrategy strategy;
  size_t k;
  double slope;
  double midpoint;
  double t_max;
  double top_p;
  size_t width;
} GenretDecoderConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failing call on this thread, or NULL. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *genret_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *genret_version(void);

struct GenretDecoderConfig genret_decoder_config_default(void);

/**
 * Temperature at emission `i` of a `total`-step reverse-annealing schedule.
 *
 * # Safety
 * `out` must be NULL or point to writable memory for one `double`.
 */
enum GenretStatus genret_temperature(size_t total,
                                     double slope,
                                     double midpoint,
                                     double t_max,
                                     size_t i,
                                     double *out);

/**
 * Builds an index from a TOML config file and writes it to `out_dir`.
 *
 * # Safety
 * Both arguments must be NULL or valid NUL-terminated strings.
 */
enum GenretStatus genret_index_build(const char *config_path, const char *out_dir);

/**
 * Loads an index directory. On success `*out` receives a handle to be
 * released with [`genret_index_free`].
 *
 * # Safety
 * `dir` must be NULL or a valid NUL-terminated string; `out` must be NULL or
 * point to writable memory for one pointer.
 */
enum GenretStatus genret_index_open(const char *dir, struct GenretIndex **out);

/**
 * Releases an index handle. NULL is ignored.
 *
 * # Safety
 * `index` must be NULL or a handle from [`genret_index_open`] that has not
 * been freed.
 */
void genret_index_free(struct GenretIndex *index);

/**
 * Number of documents in the index.
 *
 * # Safety
 * `index` must be NULL or a live handle; `out` must be NULL or writable.
 */
enum GenretStatus genret_index_doc_count(const struct GenretIndex *index, size_t *out);

/**
 * Decodes a ranked list for one query. `instruction` may be NULL to use the
 * index's own instruction; `config` may be NULL for the defaults. On success
 * `*out` receives a handle to be released with [`genret_results_free`].
 *
 * # Safety
 * Pointers must be NULL or valid: strings NUL-terminated, `config` pointing
 * to an initialized struct, `out` writable.
 */
enum GenretStatus genret_retrieve(const struct GenretIndex *index,
                                  const char *query_id,
                                  const char *text,
                                  const char *instruction,
                                  const struct GenretDecoderConfig *config,
                                  uint64_t seed,
                                  struct GenretResults **out);

/**
 * Number of ranked documents; 0 for NULL.
 *
 * # Safety
 * `results` must be NULL or a live handle.
 */
size_t genret_results_len(const struct GenretResults *results);

/**
 * Document id at rank `i` (0-based), or NULL when out of range. The string
 * is owned by `results`.
 *
 * # Safety
 * `results` must be NULL or a live handle.
 */
const char *genret_results_doc_id(const struct GenretResults *results, size_t i);

/**
 * Model log-probability of the docid at rank `i`.
 *
 * # Safety
 * `results` must be NULL or a live handle; `out` must be NULL or writable.
 */
enum GenretStatus genret_results_logprob(const struct GenretResults *results,
                                         size_t i,
                                         double *out);

/**
 * Releases a results handle. NULL is ignored.
 *
 * # Safety
 * `results` must be NULL or a handle from [`genret_retrieve`] that has not
 * been freed.
 */
void genret_results_free(struct GenretResults *results);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENRET_H */
