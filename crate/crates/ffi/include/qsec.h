#ifndef QSEC_H
#define QSEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QsecStatus {
  QSEC_STATUS_OK = 0,
  QSEC_STATUS_NULL_POINTER = 1,
  QSEC_STATUS_INVALID_ARGUMENT = 2,
  QSEC_STATUS_SHAPE_MISMATCH = 3,
  QSEC_STATUS_TRIVIAL_SECTIONS = 4,
  QSEC_STATUS_NUMERICAL = 5,
  QSEC_STATUS_PANIC = 6,
} QsecStatus;

typedef struct QsecPca QsecPca;

/**
 * A quiver with dimensions and edge maps, filled in edge by edge.
 */
typedef struct QsecRepresentation QsecRepresentation;

typedef struct QsecSectionSpace QsecSectionSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *qsec_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qsec_version(void);

/**
 * New representation with zero maps. Edge `e` runs from `sources[e]` to
 * `targets[e]`.
 *
 * # Safety
 * `dims` holds `n_vertices` entries, `sources` and `targets` hold `n_edges`
 * entries each, and `out` is writable.
 */
enum QsecStatus qsec_representation_new(size_t n_vertices,
                                        const size_t *dims,
                                        size_t n_edges,
                                        const size_t *sources,
                                        const size_t *targets,
                                        struct QsecRepresentation **out);

/**
 * Set the map of edge `edge` from `rows * cols` row-major entries; the
 * shape must be `dim(target) x dim(source)`.
 *
 * # Safety
 * `rep` comes from [`qsec_representation_new`]; `data` holds
 * `rows * cols` entries.
 */
enum QsecStatus qsec_representation_set_map(struct QsecRepresentation *rep,
                                            size_t edge,
                                            size_t rows,
                                            size_t cols,
                                            const double *data);

/**
 * # Safety
 * `rep` is null or comes from [`qsec_representation_new`] and is not used
 * afterwards.
 */
void qsec_representation_free(struct QsecRepresentation *rep);

/**
 * Space of sections of `rep`. A negative `tol` selects the automatic
 * tolerance.
 *
 * # Safety
 * `rep` comes from [`qsec_representation_new`]; `out` is writable.
 */
enum QsecStatus qsec_sections(const struct QsecRepresentation *rep,
                              double tol,
                              struct QsecSectionSpace **out);

/**
 * Path-count lower bound on the dimension of the sections of an acyclic
 * representation.
 *
 * # Safety
 * `rep` comes from [`qsec_representation_new`]; `out` is writable.
 */
enum QsecStatus qsec_dimension_lower_bound(const struct QsecRepresentation *rep, int64_t *out);

/**
 * Dimension `d` of the space of sections; 0 for a null handle.
 *
 * # Safety
 * `space` is null or comes from [`qsec_sections`].
 */
size_t qsec_section_space_dim(const struct QsecSectionSpace *space);

/**
 * Dimension `n` of the total space; 0 for a null handle.
 *
 * # Safety
 * `space` is null or comes from [`qsec_sections`].
 */
size_t qsec_section_space_total_dim(const struct QsecSectionSpace *space);

/**
 * Copy the `n x d` embedding `F` into `out` (row-major, `len == n * d`).
 *
 * # Safety
 * `space` comes from [`qsec_sections`]; `out` holds `len` writable entries.
 */
enum QsecStatus qsec_section_space_embedding(const struct QsecSectionSpace *space,
                                             double *out,
                                             size_t len);

/**
 * Largest `‖γ_t - A_e γ_s‖` relative residual of the embedding columns
 * against `rep`; negative on error.
 *
 * # Safety
 * Both handles come from this library.
 */
double qsec_section_space_residual(const struct QsecSectionSpace *space,
                                   const struct QsecRepresentation *rep);

/**
 * # Safety
 * `space` is null or comes from [`qsec_sections`] and is not used afterwards.
 */
void qsec_section_space_free(struct QsecSectionSpace *space);

/**
 * Top-`r` principal components of `n_samples x n_features` row-major data
 * inside the space of sections. With `centre` false the data must already
 * be centred.
 *
 * # Safety
 * `space` comes from [`qsec_sections`]; `data` holds
 * `n_samples * n_features` entries; `out` is writable.
 */
enum QsecStatus qsec_quiver_pca(const struct QsecSectionSpace *space,
                                const double *data,
                                size_t n_samples,
                                size_t n_features,
                                size_t r,
                                bool centre,
                                struct QsecPca **out);

/**
 * Number of components `r`; 0 for a null handle.
 *
 * # Safety
 * `pca` is null or comes from [`qsec_quiver_pca`].
 */
size_t qsec_pca_components(const struct QsecPca *pca);

/**
 * Copy the `r` eigenvalues, descending.
 *
 * # Safety
 * `pca` comes from [`qsec_quiver_pca`]; `out` holds `len` writable entries.
 */
enum QsecStatus qsec_pca_eigenvalues(const struct QsecPca *pca, double *out, size_t len);

/**
 * Copy the `n x r` unit directions (row-major).
 *
 * # Safety
 * `pca` comes from [`qsec_quiver_pca`]; `out` holds `len` writable entries.
 */
enum QsecStatus qsec_pca_directions(const struct QsecPca *pca, double *out, size_t len);

/**
 * `tr(Xᵀ S X)` at the returned directions; NaN for a null handle.
 *
 * # Safety
 * `pca` is null or comes from [`qsec_quiver_pca`].
 */
double qsec_pca_objective(const struct QsecPca *pca);

/**
 * # Safety
 * `pca` is null or comes from [`qsec_quiver_pca`] and is not used afterwards.
 */
void qsec_pca_free(struct QsecPca *pca);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSEC_H */
