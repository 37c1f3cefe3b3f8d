#ifndef DISCOURSE_H
#define DISCOURSE_H

/* Generated from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DrStatus {
  DR_STATUS_OK = 0,
  DR_STATUS_NULL_POINTER = 1,
  DR_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Unreadable, malformed or empty input data.
   */
  DR_STATUS_DATA = 3,
  /**
   * Corrupt checkpoint or one of the wrong model type.
   */
  DR_STATUS_CHECKPOINT = 4,
  /**
   * The output buffer is too small; the required length was written.
   */
  DR_STATUS_BUFFER_TOO_SMALL = 5,
  DR_STATUS_PANIC = 6,
} DrStatus;

/**
 * Generator parameters with their vocabulary.
 */
typedef struct DrGenerator DrGenerator;

/**
 * An event lexicon for action and state-change extraction.
 */
typedef struct DrLexicon DrLexicon;

/**
 * A trained ordering teacher with its vocabulary.
 */
typedef struct DrTeacher DrTeacher;

/**
 * Corpus scores in [0, 100].
 */
typedef struct DrScoreReport {
  double bleu1;
  double bleu4;
  double rouge_l;
  double action_bleu1;
  double action_bleu4;
  double action_rouge_l;
  double state_bleu1;
  double state_bleu4;
  double state_rouge_l;
} DrScoreReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *dr_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` is null or a string from this library not yet freed.
 */
void dr_string_free(char *s);

/**
 * Smoothed BLEU-n of `candidate` against `reference`, in [0, 1].
 *
 * # Safety
 * String arguments are NUL-terminated; `out` is writable.
 */
enum DrStatus dr_bleu(const char *candidate, const char *reference, uint32_t n, double *out);

/**
 * ROUGE-L F-measure of `candidate` against `reference`, in [0, 1].
 *
 * # Safety
 * String arguments are NUL-terminated; `out` is writable.
 */
enum DrStatus dr_rouge_l(const char *candidate, const char *reference, double *out);

/**
 * # Safety
 * `path` is NUL-terminated; `out` is writable.
 */
enum DrStatus dr_teacher_load(const char *path, struct DrTeacher **out);

/**
 * # Safety
 * `t` is null or a handle from [`dr_teacher_load`] not yet freed.
 */
void dr_teacher_free(struct DrTeacher *t);

/**
 * 0 for an absolute-order teacher, 1 for relative-order.
 *
 * # Safety
 * `t` is a live handle; `out` is writable.
 */
enum DrStatus dr_teacher_kind(const struct DrTeacher *t, uint32_t *out);

/**
 * Absolute-order reward of `generated` given `gold`, in [-2, 2].
 *
 * # Safety
 * `t` is a live handle; strings are NUL-terminated; `out` is writable.
 */
enum DrStatus dr_teacher_reward_absolute(const struct DrTeacher *t,
                                         const char *generated,
                                         const char *gold,
                                         double *out);

/**
 * Relative-order reward of each generated sentence. Writes up to `cap`
 * values to `rewards` and the sentence count to `out_len`; returns
 * `BufferTooSmall` when `cap` is short.
 *
 * # Safety
 * `t` is a live handle; strings are NUL-terminated; `rewards` has room for
 * `cap` doubles (or is null when `cap` is 0); `out_len` is writable.
 */
enum DrStatus dr_teacher_reward_relative(const struct DrTeacher *t,
                                         const char *generated,
                                         const char *gold,
                                         size_t l_min,
                                         size_t l_max,
                                         double *rewards,
                                         size_t cap,
                                         size_t *out_len);

/**
 * # Safety
 * `path` is NUL-terminated; `out` is writable.
 */
enum DrStatus dr_generator_load(const char *path, struct DrGenerator **out);

/**
 * # Safety
 * `g` is null or a handle from [`dr_generator_load`] not yet freed.
 */
void dr_generator_free(struct DrGenerator *g);

/**
 * Greedy-decodes a recipe body for `title` and `n_ingredients` ingredient
 * phrases. The result is freed with [`dr_string_free`].
 *
 * # Safety
 * `g` is a live handle; `title` and each ingredient are NUL-terminated;
 * `ingredients` holds `n_ingredients` pointers; `out` is writable.
 */
enum DrStatus dr_generator_greedy(const struct DrGenerator *g,
                                  const char *title,
                                  const char *const *ingredients,
                                  size_t n_ingredients,
                                  size_t max_len,
                                  char **out);

/**
 * # Safety
 * `path` is NUL-terminated; `out` is writable.
 */
enum DrStatus dr_lexicon_load(const char *path, struct DrLexicon **out);

/**
 * # Safety
 * `l` is null or a handle from [`dr_lexicon_load`] not yet freed.
 */
void dr_lexicon_free(struct DrLexicon *l);

/**
 * Corpus-level word, action and state-change overlap of `n` generations
 * against `n` references.
 *
 * # Safety
 * `l` is a live handle; `generated` and `gold` each hold `n` NUL-terminated
 * strings; `out` is writable.
 */
enum DrStatus dr_evaluate(const struct DrLexicon *l,
                          const char *const *generated,
                          const char *const *gold,
                          size_t n,
                          struct DrScoreReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISCOURSE_H */
