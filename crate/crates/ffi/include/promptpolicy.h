#ifndef PROMPTPOLICY_H
#define PROMPTPOLICY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes shared by all fallible functions.
 */
typedef enum PpStatus {
  PP_STATUS_OK = 0,
  PP_STATUS_NULL_ARGUMENT = 1,
  PP_STATUS_INVALID_ARGUMENT = 2,
  PP_STATUS_IO = 3,
  PP_STATUS_PARSE = 4,
  PP_STATUS_NUMERIC = 5,
  PP_STATUS_NOT_FOUND = 6,
  /**
   * The model reply failed validation; the out-param holds the violation.
   */
  PP_STATUS_VIOLATION = 7,
  PP_STATUS_PANIC = 99,
} PpStatus;

/**
 * Opaque knowledge-graph snapshot.
 */
typedef struct PpKg PpKg;

/**
 * Opaque bandit posterior.
 */
typedef struct PpPosterior PpPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pp_version(void);

/**
 * Message of the last failure on this thread; empty after a success.
 * The pointer stays valid until the next library call on this thread.
 */
const char *pp_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pp_string_free(char *s);

/**
 * Great-circle distance in kilometres.
 */
double pp_haversine_km(double lat1, double lon1, double lat2, double lon2);

/**
 * Scalar reward from its four components.
 */
double pp_reward_combine(double accuracy, double diversity, double violation, double cost);

/**
 * Validates a model reply against a JSON array of candidate ids. On
 * success `*out_json` holds `{"ranking": [...]}`; on `Violation` it holds
 * `{"reason": ..., "detail": ...}`.
 *
 * # Safety
 * Pointers must be valid NUL-terminated strings; `out_json` must be writable.
 */
enum PpStatus pp_parse_response(const char *reply, const char *candidates_json, char **out_json);

/**
 * Creates a prior posterior of dimension `d`.
 *
 * # Safety
 * `out` must be writable.
 */
enum PpStatus pp_posterior_new(size_t d,
                               double lambda_prior,
                               double sigma2,
                               struct PpPosterior **out);

/**
 * # Safety
 * `p` must come from this library and not be freed twice. Null is ignored.
 */
void pp_posterior_free(struct PpPosterior *p);

/**
 * Feature dimension, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t pp_posterior_dim(const struct PpPosterior *p);

/**
 * Rank-one update with feature vector `x` (length `len`) and reward `r`.
 *
 * # Safety
 * `p` must be a live handle and `x` must point to `len` doubles.
 */
enum PpStatus pp_posterior_update(struct PpPosterior *p, const double *x, size_t len, double r);

/**
 * Writes the posterior mean into `out` (length `len` = dimension).
 *
 * # Safety
 * `p` must be a live handle and `out` must point to `len` writable doubles.
 */
enum PpStatus pp_posterior_mean(const struct PpPosterior *p, double *out, size_t len);

/**
 * Picks the row of `features` (`n_actions` rows of `dim` doubles,
 * row-major) with the largest score under θ. θ is the posterior mean when
 * `use_mean` is nonzero, otherwise a Thompson draw seeded by `seed`.
 * Ties keep the lowest index.
 *
 * # Safety
 * `p` must be a live handle, `features` must hold `n_actions * dim`
 * doubles, and `out_index` must be writable.
 */
enum PpStatus pp_posterior_select(const struct PpPosterior *p,
                                  const double *features,
                                  size_t n_actions,
                                  int32_t use_mean,
                                  uint64_t seed,
                                  size_t *out_index);

/**
 * Writes a binary checkpoint.
 *
 * # Safety
 * `p` must be a live handle and `path` a valid string.
 */
enum PpStatus pp_posterior_save(const struct PpPosterior *p, const char *path);

/**
 * Loads a checkpoint written by this library or the command-line tool.
 *
 * # Safety
 * `path` must be a valid string and `out` writable.
 */
enum PpStatus pp_posterior_load(const char *path, struct PpPosterior **out);

/**
 * Loads a knowledge-graph snapshot written by `build-kg`.
 *
 * # Safety
 * `path` must be a valid string and `out` writable.
 */
enum PpStatus pp_kg_load(const char *path, struct PpKg **out);

/**
 * # Safety
 * `kg` must come from this library and not be freed twice. Null is ignored.
 */
void pp_kg_free(struct PpKg *kg);

/**
 * Candidate discovery for `user` standing at `last_poi`. `config_json` may
 * be null for defaults. `*out_json` receives an array of
 * `{"id", "category", "distance"}` (kilometres).
 *
 * # Safety
 * `kg` must be a live handle, strings valid, `out_json` writable.
 */
enum PpStatus pp_kg_discover(const struct PpKg *kg,
                             const char *user,
                             const char *last_poi,
                             const char *config_json,
                             char **out_json);

/**
 * The full evidence card for `poi` as JSON, before any pruning.
 *
 * # Safety
 * `kg` must be a live handle, strings valid, `out_json` writable.
 */
enum PpStatus pp_kg_evidence_card(const struct PpKg *kg,
                                  const char *user,
                                  const char *poi,
                                  const char *last_poi,
                                  const char *config_json,
                                  char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROMPTPOLICY_H */
