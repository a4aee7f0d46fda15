#ifndef MEDSFT_H
#define MEDSFT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MedsftStatus {
  MEDSFT_STATUS_OK = 0,
  MEDSFT_STATUS_NULL_POINTER = 1,
  MEDSFT_STATUS_INVALID_UTF8 = 2,
  MEDSFT_STATUS_INVALID_ARGUMENT = 3,
  MEDSFT_STATUS_PARSE = 4,
  MEDSFT_STATUS_IO = 5,
  MEDSFT_STATUS_OUT_OF_RANGE = 6,
  MEDSFT_STATUS_PANIC = 7,
} MedsftStatus;

typedef enum MedsftCombine {
  MEDSFT_COMBINE_ALL_DIMS = 0,
  MEDSFT_COMBINE_MEAN_DIM = 1,
} MedsftCombine;

/**
 * Records loaded from a corpus file.
 */
typedef struct MedsftCorpus MedsftCorpus;

typedef struct MedsftTTest {
  double mean_diff;
  double sd_diff;
  double t;
  double p;
  size_t n;
} MedsftTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *medsft_version(void);

/**
 * Last error message on this thread, or NULL. Valid until the next call
 * into this library from the same thread.
 */
const char *medsft_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void medsft_string_free(char *s);

/**
 * Paired t-test of `a` against `b` (differences `a - b`), two-sided.
 *
 * # Safety
 * `a` and `b` must point to `n` doubles each; `out` must be writable.
 */
enum MedsftStatus medsft_paired_ttest(const double *a,
                                      const double *b,
                                      size_t n,
                                      struct MedsftTTest *out);

/**
 * Relative gap `(model - human) / human` in percent, from one-decimal means.
 *
 * # Safety
 * `out` must be writable.
 */
enum MedsftStatus medsft_gap_percent(double model, double human, double *out);

/**
 * Percentage of pairs with `model[i] >= human[i]`.
 *
 * # Safety
 * `model` and `human` must point to `n` doubles each; `out` must be writable.
 */
enum MedsftStatus medsft_win_rate(const double *model, const double *human, size_t n, double *out);

/**
 * Style features of one consultation record given as JSON. Writes a JSON
 * object to `*out`, to be released with [`medsft_string_free`].
 *
 * # Safety
 * `record_json` must be a NUL-terminated string; `out` must be writable.
 */
enum MedsftStatus medsft_style_features_json(const char *record_json,
                                             bool per_thousand_tokens,
                                             char **out);

/**
 * Keep mask for `n` score triples laid out row-major in `scores`
 * (professionalism, explainability, emotional support). `mask` receives
 * `n` bytes of 0/1; `thresholds`, if not NULL, receives 3 doubles.
 *
 * # Safety
 * `scores` must hold `3 * n` doubles, `mask` room for `n` bytes and
 * `thresholds` (when given) room for 3 doubles.
 */
enum MedsftStatus medsft_select_mask(const double *scores,
                                     size_t n,
                                     double quantile,
                                     enum MedsftCombine combine,
                                     uint8_t *mask,
                                     double *thresholds);

/**
 * Load a JSONL corpus of consultation records. In lenient mode malformed
 * lines are skipped.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MedsftStatus medsft_corpus_open(const char *path, bool lenient, struct MedsftCorpus **out);

/**
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum MedsftStatus medsft_corpus_len(const struct MedsftCorpus *corpus, size_t *out);

/**
 * Record `index` as JSON, released with [`medsft_string_free`].
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum MedsftStatus medsft_corpus_record_json(const struct MedsftCorpus *corpus,
                                            size_t index,
                                            char **out);

/**
 * # Safety
 * `corpus` must be NULL or a handle from [`medsft_corpus_open`], not yet freed.
 */
void medsft_corpus_free(struct MedsftCorpus *corpus);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDSFT_H */
