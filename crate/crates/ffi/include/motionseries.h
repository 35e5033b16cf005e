#ifndef MOTIONSERIES_H
#define MOTIONSERIES_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_INVALID_ARGUMENT = 1,
  MS_STATUS_DATA_ERROR = 2,
  MS_STATUS_NOT_CONVERGED = 3,
  MS_STATUS_NULL_POINTER = 4,
  MS_STATUS_PANIC = 5,
} MsStatus;

typedef struct MsNetwork MsNetwork;

typedef struct MsPca MsPca;

typedef struct MsSvm MsSvm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ms_last_error(void);

/**
 * Number of values in a flow descriptor for a `grid × grid` layout with `bins` orientations.
 */
size_t ms_descriptor_len(size_t grid, size_t bins);

/**
 * Estimates optical flow between two `height × width` row-major frames
 * (intensities in [0, 1]) and writes its descriptor to `out`.
 */
enum MsStatus ms_flow_describe(const double *prev,
                               const double *next,
                               size_t width,
                               size_t height,
                               double alpha,
                               size_t iterations,
                               size_t grid,
                               size_t bins,
                               double *out,
                               size_t out_len);

/**
 * `exp(−gamma · Σ (x−y)² / (x+y+ε))` over nonnegative vectors of length `len`.
 */
enum MsStatus ms_chi2_kernel(const double *x,
                             const double *y,
                             size_t len,
                             double gamma,
                             double *out);

/**
 * Fits PCA on `rows × cols` row-major samples, keeping the fewest
 * components whose variance share reaches `pov`.
 */
enum MsStatus ms_pca_fit(const double *samples,
                         size_t rows,
                         size_t cols,
                         double pov,
                         struct MsPca **out);

enum MsStatus ms_pca_load(const char *file, struct MsPca **out);

enum MsStatus ms_pca_save(const struct MsPca *pca, const char *file);

size_t ms_pca_input_dim(const struct MsPca *pca);

size_t ms_pca_retained(const struct MsPca *pca);

/**
 * Projects a `frames × input_dim` row-major sequence to `retained × frames`
 * (channel-major) values in `out`.
 */
enum MsStatus ms_pca_transform(const struct MsPca *pca,
                               const float *sequence,
                               size_t frames,
                               size_t dim,
                               double *out,
                               size_t out_len);

void ms_pca_free(struct MsPca *pca);

/**
 * Loads a `CNN1` model file.
 */
enum MsStatus ms_network_load(const char *file, struct MsNetwork **out);

size_t ms_network_input_channels(const struct MsNetwork *net);

size_t ms_network_input_length(const struct MsNetwork *net);

size_t ms_network_feature_len(const struct MsNetwork *net);

size_t ms_network_classes(const struct MsNetwork *net);

/**
 * Penultimate-layer features of a `channels × length` channel-major input.
 */
enum MsStatus ms_network_extract(const struct MsNetwork *net,
                                 const double *input,
                                 size_t channels,
                                 size_t length,
                                 double *out,
                                 size_t out_len);

/**
 * Class probabilities of a `channels × length` channel-major input.
 */
enum MsStatus ms_network_predict_proba(const struct MsNetwork *net,
                                       const double *input,
                                       size_t channels,
                                       size_t length,
                                       double *out,
                                       size_t out_len);

void ms_network_free(struct MsNetwork *net);

/**
 * Fits the one-vs-rest SVM on `rows × dim` row-major nonnegative features
 * with one C-string label per row. A `gamma` of zero or less selects the
 * data-driven default.
 */
enum MsStatus ms_svm_fit(const double *features,
                         size_t rows,
                         size_t dim,
                         const char *const *labels,
                         double c_box,
                         double gamma,
                         double tol,
                         struct MsSvm **out);

enum MsStatus ms_svm_load(const char *file, struct MsSvm **out);

enum MsStatus ms_svm_save(const struct MsSvm *model, const char *file);

size_t ms_svm_classes(const struct MsSvm *model);

/**
 * Label of class `index`, owned by the handle; null when out of range.
 */
const char *ms_svm_label(const struct MsSvm *model, size_t index);

/**
 * Classifies one feature vector. Writes the winning class index and, when
 * `decision_values` is non-null, one decision value per class.
 */
enum MsStatus ms_svm_predict(const struct MsSvm *model,
                             const double *features,
                             size_t dim,
                             size_t *class_index,
                             double *decision_values,
                             size_t values_len);

void ms_svm_free(struct MsSvm *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTIONSERIES_H */
