#ifndef INOCULATE_H
#define INOCULATE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum InocStatus {
  INOC_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8, or otherwise malformed argument.
   */
  INOC_STATUS_INVALID_ARGUMENT = 1,
  INOC_STATUS_CONFIG = 2,
  INOC_STATUS_DATA = 3,
  INOC_STATUS_RUNTIME = 4,
} InocStatus;

/**
 * Opaque handle to a trained model checkpoint.
 */
typedef struct InocCheckpoint InocCheckpoint;

/**
 * Opaque handle to a labelled dataset split.
 */
typedef struct InocSplit InocSplit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message from the most recent failing call on this thread. The pointer is
 * owned by the library and valid until the next failing call on the same
 * thread; never free it.
 */
const char *inoc_last_error(void);

/**
 * Library version as a static NUL-terminated string; never free it.
 */
const char *inoc_version(void);

/**
 * Loads a JSON Lines split from `path` into `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum InocStatus inoc_split_load(const char *path, struct InocSplit **out);

/**
 * Writes the split to `path` as JSON Lines.
 *
 * # Safety
 * `split` must be a live handle and `path` a valid NUL-terminated string.
 */
enum InocStatus inoc_split_write(const struct InocSplit *split, const char *path);

/**
 * Number of examples in the split; 0 for a null handle.
 *
 * # Safety
 * `split` must be a live handle or null.
 */
uintptr_t inoc_split_len(const struct InocSplit *split);

/**
 * Releases a split handle. Null is a no-op.
 *
 * # Safety
 * `split` must be a handle returned by this library, not yet freed, or null.
 */
void inoc_split_free(struct InocSplit *split);

/**
 * Generates the numerical-reasoning dataset with its default category
 * counts (7596 examples) into `*out`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum InocStatus inoc_gen_numeric_default(uint64_t seed, struct InocSplit **out);

/**
 * Accuracy of the 3-rule quantifier baseline over the split, in [0, 1].
 *
 * # Safety
 * `split` must be a live handle and `out_acc` a valid pointer.
 */
enum InocStatus inoc_baseline_accuracy(const struct InocSplit *split, double *out_acc);

/**
 * Applies a challenge transformation to every example of the split. `kind`
 * is one of: "word_overlap", "negation", "spelling_error",
 * "length_mismatch", "distractor".
 *
 * # Safety
 * `split` must be a live handle, `kind` a valid NUL-terminated string and
 * `out` a valid pointer.
 */
enum InocStatus inoc_transform(const struct InocSplit *split,
                               const char *kind,
                               uint64_t seed,
                               struct InocSplit **out);

/**
 * Trains a classifier from scratch with default hyperparameters, stopping
 * early on `dev`, and stores the checkpoint handle in `*out`.
 *
 * # Safety
 * `train_split` and `dev` must be live handles and `out` a valid pointer.
 */
enum InocStatus inoc_train(const struct InocSplit *train_split,
                           const struct InocSplit *dev,
                           uint64_t seed,
                           struct InocCheckpoint **out);

/**
 * Continues training `base` on `challenge_train`, validating on `dev`, and
 * stores the new checkpoint in `*out`. `base` is left untouched.
 *
 * # Safety
 * All handles must be live and `out` a valid pointer.
 */
enum InocStatus inoc_fine_tune(const struct InocCheckpoint *base,
                               const struct InocSplit *challenge_train,
                               const struct InocSplit *dev,
                               double lr,
                               uintptr_t max_epochs,
                               uint64_t seed,
                               struct InocCheckpoint **out);

/**
 * Accuracy of the checkpoint over the split, in [0, 1].
 *
 * # Safety
 * `ckpt` and `split` must be live handles and `out_acc` a valid pointer.
 */
enum InocStatus inoc_evaluate(const struct InocCheckpoint *ckpt,
                              const struct InocSplit *split,
                              double *out_acc);

/**
 * Writes the checkpoint to `path` in the library's binary format.
 *
 * # Safety
 * `ckpt` must be a live handle and `path` a valid NUL-terminated string.
 */
enum InocStatus inoc_checkpoint_save(const struct InocCheckpoint *ckpt, const char *path);

/**
 * Loads a checkpoint written by `inoc_checkpoint_save` into `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum InocStatus inoc_checkpoint_load(const char *path, struct InocCheckpoint **out);

/**
 * Releases a checkpoint handle. Null is a no-op.
 *
 * # Safety
 * `ckpt` must be a handle returned by this library, not yet freed, or null.
 */
void inoc_checkpoint_free(struct InocCheckpoint *ckpt);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* INOCULATE_H */
