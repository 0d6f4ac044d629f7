/* drivecap C API: driving-commentary dataset synthesis, training, evaluation and caption metrics. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. 0 is success; anything else is an error and
 * [`dc_last_error_message`] holds the detail.
 */
enum DcStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_ARGUMENT = 2,
  DC_STATUS_IO_ERROR = 3,
  DC_STATUS_RUNTIME_ERROR = 4,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum DcStatus DcStatus;
#else
typedef int32_t DcStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque dataset handle: the clips of every split plus the manifest.
 */
typedef struct DcDataset DcDataset;

/**
 * The four corpus-level scores, as percentages.
 */
typedef struct DcScores {
  double description_meteor;
  double explanation_meteor;
  double description_bleu;
  double explanation_bleu;
} DcScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dc_version(void);

/**
 * Copies the last error message of this thread into `buf`; returns the
 * message length in bytes (excluding NUL), or 0 when there is none.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be NULL to query length).
 */
size_t dc_last_error_message(char *buf, size_t cap);

/**
 * Generates a synthetic dataset in memory.
 *
 * # Safety
 * `out` must be a valid pointer to a `*mut DcDataset` slot.
 */
DcStatus dc_dataset_generate(size_t n,
                             size_t frames,
                             size_t grid,
                             size_t feat_dim,
                             size_t max_len,
                             uint64_t seed,
                             double train_ratio,
                             double validation_ratio,
                             double test_ratio,
                             double noise,
                             struct DcDataset **out);

/**
 * Loads a dataset directory written by `dc_dataset_save` (or the CLI).
 *
 * # Safety
 * `dir` must be a NUL-terminated UTF-8 path; `out` a valid slot.
 */
DcStatus dc_dataset_load(const char *dir, struct DcDataset **out);

/**
 * Writes `dataset.jsonl` plus `manifest.json` into `dir`.
 *
 * # Safety
 * `dataset` must come from this library; `dir` as in `dc_dataset_load`.
 */
DcStatus dc_dataset_save(const struct DcDataset *dataset, const char *dir);

/**
 * Split sizes of a dataset handle.
 *
 * # Safety
 * Pointers must be valid or NULL (NULL outputs are skipped).
 */
DcStatus dc_dataset_counts(const struct DcDataset *dataset,
                           size_t *out_train,
                           size_t *out_validation,
                           size_t *out_test);

/**
 * Copies the caption of clip `index` (storage order: train, validation,
 * test) into `buf`; `out_len` receives the byte length excluding NUL.
 *
 * # Safety
 * `dataset` from this library; `buf`/`out_len` valid or NULL as above.
 */
DcStatus dc_dataset_caption(const struct DcDataset *dataset,
                            size_t index,
                            char *buf,
                            size_t cap,
                            size_t *out_len);

/**
 * Releases a dataset handle. NULL is a no-op.
 *
 * # Safety
 * `dataset` must come from this library and not be freed twice.
 */
void dc_dataset_free(struct DcDataset *dataset);

/**
 * Corpus-level BLEU over aligned single-reference corpora of
 * space-separated sentences, as a percentage.
 *
 * # Safety
 * Arrays per [`sentence_corpus`]; `out` must be valid.
 */
DcStatus dc_corpus_bleu(const char *const *candidates,
                        const char *const *references,
                        size_t len,
                        double *out);

/**
 * Corpus-level METEOR (macro-average of sentence scores), percentage.
 *
 * # Safety
 * As for [`dc_corpus_bleu`].
 */
DcStatus dc_corpus_meteor(const char *const *candidates,
                          const char *const *references,
                          size_t len,
                          double *out);

/**
 * Sentence METEOR in [0, 1] for two space-separated sentences.
 *
 * # Safety
 * Strings NUL-terminated UTF-8; `out` valid.
 */
DcStatus dc_meteor_sentence(const char *candidate, const char *reference, double *out);

/**
 * Splits full captions at `<sep>`/`<END>` and scores description and
 * explanation parts with both metrics.
 *
 * # Safety
 * As for [`dc_corpus_bleu`]; `out` must point to a DcScores.
 */
DcStatus dc_score_parts(const char *const *candidates,
                        const char *const *references,
                        size_t len,
                        struct DcScores *out);

/**
 * Trains on a dataset directory and writes `model.cexp` plus
 * `loss_log.csv` into `out_dir`. `config_lines` may be NULL or hold
 * newline-separated `key = value` overrides (same keys as the CLI config
 * file).
 *
 * # Safety
 * Paths NUL-terminated UTF-8; `config_lines` NULL or likewise.
 */
DcStatus dc_train(const char *dataset_dir, const char *out_dir, const char *config_lines);

/**
 * Evaluates a checkpoint on one split ("train", "validation" or "test").
 * `out_dir` may be NULL (no files written); `out_scores` may be NULL.
 *
 * # Safety
 * Pointer arguments as for [`dc_train`]; `out_scores` valid or NULL.
 */
DcStatus dc_evaluate(const char *checkpoint,
                     const char *dataset_dir,
                     const char *split,
                     const char *out_dir,
                     const char *config_lines,
                     struct DcScores *out_scores);

/**
 * Checks every loss component's gradients against central differences on
 * a small synthetic clip; writes the worst relative error to `out`.
 *
 * # Safety
 * `config_lines` NULL or NUL-terminated UTF-8; `out` valid.
 */
DcStatus dc_gradcheck(const char *config_lines, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
