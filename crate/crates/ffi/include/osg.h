#ifndef OSG_H
#define OSG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum OsgStatus {
  OSG_STATUS_OK = 0,
  OSG_STATUS_NULL_POINTER = 1,
  OSG_STATUS_INVALID_UTF8 = 2,
  OSG_STATUS_BUFFER_TOO_SMALL = 3,
  OSG_STATUS_OUT_OF_RANGE = 4,
  OSG_STATUS_DIMENSION = 5,
  OSG_STATUS_DEGENERATE = 6,
  OSG_STATUS_NON_FINITE = 7,
  OSG_STATUS_CONFIG = 8,
  OSG_STATUS_PARSE = 9,
  OSG_STATUS_DUPLICATE_ID = 10,
  OSG_STATUS_FORMAT = 11,
  OSG_STATUS_TRUNCATED = 12,
  OSG_STATUS_ELIGIBILITY = 13,
  OSG_STATUS_SAMPLING = 14,
  OSG_STATUS_CAPABILITY = 15,
  OSG_STATUS_UNSUPPORTED = 16,
  OSG_STATUS_PRECONDITION = 17,
  OSG_STATUS_IO = 18,
  OSG_STATUS_PANIC = 99,
} OsgStatus;

typedef enum OsgTask {
  OSG_TASK_FSG = 0,
  OSG_TASK_CM_FSG = 1,
} OsgTask;

typedef struct OsgDataset OsgDataset;

typedef struct OsgModel OsgModel;

typedef struct OsgSplit OsgSplit;

/**
 * Episode shape and schedule for [`osg_evaluate`].
 */
typedef struct OsgEvalParams {
  size_t n;
  size_t k;
  size_t m;
  size_t episodes;
  uint64_t seed;
} OsgEvalParams;

/**
 * Pooled result for one evaluation subset. `reported` is 0 when the subset
 * had too few classes for the episode shape; the other fields are then 0.
 */
typedef struct OsgSubsetResult {
  int32_t reported;
  uint64_t queries;
  uint64_t correct;
  double accuracy;
} OsgSubsetResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Failure message of the most recent call on this thread; empty if that call
 * succeeded. The pointer stays valid until the next `osg_*` call on the same
 * thread.
 */
const char *osg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *osg_version(void);

/**
 * Loads a dataset directory written by `osg synth` (or laid out the same way).
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OsgStatus osg_dataset_load(const char *dir, struct OsgDataset **out);

/**
 * Generates a synthetic dataset from `synth.*` keys in `config` (null for
 * defaults).
 *
 * # Safety
 * `config` must be null or NUL-terminated; `out` must be a valid pointer.
 */
enum OsgStatus osg_dataset_synth(const char *config, struct OsgDataset **out);

/**
 * Writes the dataset as a directory (which must not already hold files of
 * the same names).
 *
 * # Safety
 * `ds` must come from this library; `dir` must be NUL-terminated.
 */
enum OsgStatus osg_dataset_save(const struct OsgDataset *ds, const char *dir);

/**
 * # Safety
 * `ds` must be null or a handle from this library not yet freed.
 */
void osg_dataset_free(struct OsgDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live dataset handle. Null yields 0.
 */
size_t osg_dataset_num_instances(const struct OsgDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live dataset handle. Null yields 0.
 */
size_t osg_dataset_num_classes(const struct OsgDataset *ds);

/**
 * Frames per instance.
 *
 * # Safety
 * `ds` must be null or a live dataset handle. Null yields 0.
 */
size_t osg_dataset_frames(const struct OsgDataset *ds);

/**
 * Per-frame feature dimension.
 *
 * # Safety
 * `ds` must be null or a live dataset handle. Null yields 0.
 */
size_t osg_dataset_feature_dim(const struct OsgDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live dataset handle. Null yields 0.
 */
size_t osg_dataset_label_dim(const struct OsgDataset *ds);

/**
 * Class id of instance `index` (position in the dataset, not instance id).
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` a valid pointer.
 */
enum OsgStatus osg_dataset_instance_class(const struct OsgDataset *ds, size_t index, uint32_t *out);

/**
 * Copies the label embedding of `class_id` into `out`.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must hold `out_len` doubles.
 */
enum OsgStatus osg_dataset_label_embedding(const struct OsgDataset *ds,
                                           uint32_t class_id,
                                           double *out,
                                           size_t out_len);

/**
 * Generates a split from `split.*` keys in `config` (null for defaults).
 *
 * # Safety
 * `ds` must be a live dataset handle; `config` null or NUL-terminated; `out`
 * a valid pointer.
 */
enum OsgStatus osg_split_generate(const struct OsgDataset *ds,
                                  const char *config,
                                  struct OsgSplit **out);

/**
 * Loads a split CSV written by `osg split`, checked against the dataset's
 * class table.
 *
 * # Safety
 * `path` must be NUL-terminated; `ds` a live handle; `out` a valid pointer.
 */
enum OsgStatus osg_split_load(const char *path, const struct OsgDataset *ds, struct OsgSplit **out);

/**
 * # Safety
 * `split` must be null or a handle from this library not yet freed.
 */
void osg_split_free(struct OsgSplit *split);

/**
 * Number of classes in the train, validation and test subsets.
 *
 * # Safety
 * `split` must be a live handle; the `out_*` pointers must be valid.
 */
enum OsgStatus osg_split_sizes(const struct OsgSplit *split,
                               size_t *out_train,
                               size_t *out_val,
                               size_t *out_test);

/**
 * Initializes a model from `model.*` and `train.*` keys and trains it, as
 * `osg train` does. Validation messages are discarded.
 *
 * # Safety
 * `ds` and `split` must be live handles; `config` null or NUL-terminated;
 * `out` a valid pointer.
 */
enum OsgStatus osg_train(const struct OsgDataset *ds,
                         const struct OsgSplit *split,
                         const char *config,
                         struct OsgModel **out);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` a valid pointer.
 */
enum OsgStatus osg_model_load(const char *path, struct OsgModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
enum OsgStatus osg_model_save(const struct OsgModel *model, const char *path);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void osg_model_free(struct OsgModel *model);

/**
 * Length of every embedding the model produces.
 *
 * # Safety
 * `model` must be null or a live handle. Null yields 0.
 */
size_t osg_model_embed_dim(const struct OsgModel *model);

/**
 * Embeds dataset instance `index` into `out` (unit norm).
 *
 * # Safety
 * `model` and `ds` must be live handles; `out` must hold `out_len` doubles.
 */
enum OsgStatus osg_model_embed_instance(const struct OsgModel *model,
                                        const struct OsgDataset *ds,
                                        size_t index,
                                        double *out,
                                        size_t out_len);

/**
 * Embeds raw features, `frames × dim` values in row-major order.
 *
 * # Safety
 * `model` must be a live handle; `features` must hold `frames * dim`
 * doubles; `out` must hold `out_len` doubles.
 */
enum OsgStatus osg_model_embed_features(const struct OsgModel *model,
                                        const double *features,
                                        size_t frames,
                                        size_t dim,
                                        double *out,
                                        size_t out_len);

/**
 * Projects a label embedding into the joint space (JE models only).
 *
 * # Safety
 * `model` must be a live handle; `label` must hold `label_len` doubles;
 * `out` must hold `out_len` doubles.
 */
enum OsgStatus osg_model_embed_label(const struct OsgModel *model,
                                     const double *label,
                                     size_t label_len,
                                     double *out,
                                     size_t out_len);

/**
 * κ-NN over `count` support vectors of length `dim` stored row-major.
 *
 * # Safety
 * `support` must hold `count * dim` doubles, `labels` `count` values,
 * `query` `dim` doubles; `out_label` must be a valid pointer.
 */
enum OsgStatus osg_knn_classify(const double *support,
                                const uint32_t *labels,
                                size_t count,
                                size_t dim,
                                const double *query,
                                size_t kappa,
                                uint32_t *out_label);

/**
 * Episodic evaluation on the split's test classes. `out` receives three
 * results, in the order All, HoV, HoN.
 *
 * # Safety
 * All handles must be live; `params` valid; `out` must hold three
 * `OsgSubsetResult` values.
 */
enum OsgStatus osg_evaluate(const struct OsgModel *model,
                            const struct OsgDataset *ds,
                            const struct OsgSplit *split,
                            enum OsgTask task,
                            const struct OsgEvalParams *params,
                            struct OsgSubsetResult *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* OSG_H */
