#ifndef CAPT_BENCH_H
#define CAPT_BENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CaptStatus {
  CAPT_STATUS_OK = 0,
  CAPT_STATUS_NULL_POINTER = 1,
  CAPT_STATUS_INVALID_UTF8 = 2,
  CAPT_STATUS_INVALID_ARGUMENT = 3,
  CAPT_STATUS_UNKNOWN_PHONE = 4,
  CAPT_STATUS_PARSE_FAILURE = 5,
  CAPT_STATUS_IO = 6,
  CAPT_STATUS_LENGTH_MISMATCH = 7,
  CAPT_STATUS_TOO_FEW_SAMPLES = 8,
  CAPT_STATUS_BUFFER_TOO_SMALL = 9,
  CAPT_STATUS_PANIC = 10,
} CaptStatus;

/*
 A loaded `capt-corpus/1` file.
 */
typedef struct CaptCorpus CaptCorpus;

/*
 A phone inventory.
 */
typedef struct CaptInventory CaptInventory;

typedef struct CaptEditCounts {
  uint64_t insertions;
  uint64_t deletions;
  uint64_t substitutions;
  uint64_t matches;
  uint64_t reference_len;
} CaptEditCounts;

typedef struct CaptMddCounts {
  uint64_t true_pos;
  uint64_t false_pos;
  uint64_t false_neg;
  uint64_t true_neg;
} CaptMddCounts;

typedef struct CaptMddScores {
  double precision;
  double recall;
  double f1;
  struct CaptMddCounts counts;
  bool degenerate;
} CaptMddScores;

/*
 `r` is meaningful only when `has_r`, `p_value` only when `has_p`.
 */
typedef struct CaptCorrelation {
  double r;
  double p_value;
  size_t n;
  bool has_r;
  bool has_p;
  bool degenerate;
} CaptCorrelation;

typedef struct CaptApaScores {
  uint8_t accuracy;
  uint8_t fluency;
  uint8_t prosodic;
  uint8_t total;
} CaptApaScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *capt_version(void);

/*
 Message of the last failure on this thread, or null. Valid until the
 next call into this library on the same thread.
 */
const char *capt_last_error(void);

/*
 # Safety
 `s` must be null or a string returned by this library, not yet freed.
 */
void capt_string_free(char *s);

/*
 The built-in 46-phone inventory. Never null.
 */
struct CaptInventory *capt_inventory_default(void);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CaptStatus capt_inventory_load(const char *path, struct CaptInventory **out);

/*
 # Safety
 `inv` must be null or a handle from this library, not yet freed.
 */
void capt_inventory_free(struct CaptInventory *inv);

/*
 Number of phones including `<unk>`, or 0 for a null handle.

 # Safety
 `inv` must be null or a live handle.
 */
size_t capt_inventory_len(const struct CaptInventory *inv);

/*
 Normalizes `text` to space-separated inventory symbols. In lenient mode
 unknown symbols become `<unk>` instead of failing.

 # Safety
 Pointers must be valid; `out_normalized` receives an owned string.
 */
enum CaptStatus capt_tokenize(const struct CaptInventory *inv,
                              const char *text,
                              bool lenient,
                              char **out_normalized,
                              size_t *out_len);

/*
 Aligns two phone strings and reports the edit counts.

 # Safety
 Pointers must be valid.
 */
enum CaptStatus capt_align_phones(const struct CaptInventory *inv,
                                  const char *reference,
                                  const char *hypothesis,
                                  struct CaptEditCounts *out);

/*
 (I + D + S) / N.

 # Safety
 Pointers must be valid.
 */
enum CaptStatus capt_error_rate(const struct CaptEditCounts *counts, double *out);

/*
 Writes one detection flag per canonical phone into `out_flags`, which
 holds `capacity` entries. `out_len` always receives the number needed.

 # Safety
 Pointers must be valid and `out_flags` must hold `capacity` bools.
 */
enum CaptStatus capt_flag_detected(const struct CaptInventory *inv,
                                   const char *canonical,
                                   const char *hypothesis,
                                   bool *out_flags,
                                   size_t capacity,
                                   size_t *out_len);

/*
 # Safety
 `detected` and `truth` must each hold `n` bools.
 */
enum CaptStatus capt_mdd_counts(const bool *detected,
                                const bool *truth,
                                size_t n,
                                struct CaptMddCounts *out);

/*
 # Safety
 Pointers must be valid.
 */
enum CaptStatus capt_mdd_scores(const struct CaptMddCounts *counts, struct CaptMddScores *out);

/*
 Pearson correlation of two series of length `n`.

 # Safety
 `x` and `y` must each hold `n` doubles.
 */
enum CaptStatus capt_pcc(const double *x, const double *y, size_t n, struct CaptCorrelation *out);

/*
 # Safety
 `out` must be valid.
 */
enum CaptStatus capt_student_t_two_sided(double t, double df, double *out);

/*
 # Safety
 Pointers must be valid.
 */
enum CaptStatus capt_parse_apa(const char *text, struct CaptApaScores *out);

/*
 Extracts the word and phoneme transcripts from an MDD response.

 # Safety
 Pointers must be valid; both outputs receive owned strings.
 */
enum CaptStatus capt_parse_mdd(const struct CaptInventory *inv,
                               const char *text,
                               char **out_words,
                               char **out_phones);

/*
 Prompt for task `"apa"` or `"mdd"`, optionally prefixed by its control
 token.

 # Safety
 Pointers must be valid; `out` receives an owned string.
 */
enum CaptStatus capt_build_prompt(const char *task, bool control_token, char **out);

/*
 # Safety
 Pointers must be valid.
 */
enum CaptStatus capt_corpus_load(const char *path, struct CaptCorpus **out);

/*
 # Safety
 `corpus` must be null or a live handle.
 */
size_t capt_corpus_len(const struct CaptCorpus *corpus);

/*
 # Safety
 `corpus` must be null or a handle from this library, not yet freed.
 */
void capt_corpus_free(struct CaptCorpus *corpus);

/*
 Scores a `capt-raw/1` file against a corpus and returns the
 `capt-report/1` JSON.

 # Safety
 Pointers must be valid; `out_json` receives an owned string.
 */
enum CaptStatus capt_score_files(const struct CaptCorpus *corpus,
                                 const char *raw_path,
                                 bool reproducible,
                                 char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAPT_BENCH_H */
