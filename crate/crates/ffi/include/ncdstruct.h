#ifndef NCDSTRUCT_H
#define NCDSTRUCT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum NcdStatus {
  NCD_STATUS_OK = 0,
  NCD_STATUS_NULL_ARGUMENT = 1,
  NCD_STATUS_INPUT = 2,
  NCD_STATUS_CODEC_UNAVAILABLE = 3,
  NCD_STATUS_INVALID_SPEC = 4,
  NCD_STATUS_UNDEFINED = 5,
  NCD_STATUS_DOMAIN = 6,
  NCD_STATUS_PARSE = 7,
  NCD_STATUS_IO = 8,
  NCD_STATUS_OTHER = 9,
  NCD_STATUS_PANIC = 10,
} NcdStatus;

// Opaque distance matrix.
typedef struct NcdMatrix NcdMatrix;

// Opaque unrooted binary tree.
typedef struct NcdTree NcdTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *ncd_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void ncd_string_free(char *s);

// NCD of two byte strings under `codec` (e.g. "ppm:6", "lz", "bwt").
//
// # Safety
// Buffers must be valid for their lengths; `codec` must be NUL-terminated.
enum NcdStatus ncd_distance(const uint8_t *x,
                            size_t x_len,
                            const uint8_t *y,
                            size_t y_len,
                            const char *codec,
                            double *out);

// Pairwise NCD matrix over `n` documents.
//
// # Safety
// `ids`, `bodies` and `lens` must each hold `n` valid entries.
enum NcdStatus ncd_matrix_build(const char *const *ids,
                                const uint8_t *const *bodies,
                                const size_t *lens,
                                size_t n,
                                const char *codec,
                                struct NcdMatrix **out);

// Parse a matrix from CSV text (`id,<ids>` header, one row per id).
//
// # Safety
// `csv` must be NUL-terminated.
enum NcdStatus ncd_matrix_from_csv(const char *csv, struct NcdMatrix **out);

// Number of rows; 0 for a null handle.
//
// # Safety
// `m` must be null or a live matrix handle.
size_t ncd_matrix_len(const struct NcdMatrix *m);

// Entry `(i, j)`.
//
// # Safety
// `m` must be a live matrix handle.
enum NcdStatus ncd_matrix_get(const struct NcdMatrix *m, size_t i, size_t j, double *out);

// Id of row `i`, as a new string.
//
// # Safety
// `m` must be a live matrix handle.
enum NcdStatus ncd_matrix_id(const struct NcdMatrix *m, size_t i, char **out);

// Matrix as CSV text, as a new string.
//
// # Safety
// `m` must be a live matrix handle.
enum NcdStatus ncd_matrix_to_csv(const struct NcdMatrix *m, char **out);

// Release a matrix. Null is ignored.
//
// # Safety
// `m` must come from this library and not have been freed already.
void ncd_matrix_free(struct NcdMatrix *m);

// Average-linkage tree, then `refine_iterations` seeded refinement steps.
//
// # Safety
// `m` must be a live matrix handle.
enum NcdStatus ncd_tree_build(const struct NcdMatrix *m,
                              size_t refine_iterations,
                              uint64_t seed,
                              struct NcdTree **out);

// Parse Newick text; a two-child root is suppressed.
//
// # Safety
// `newick` must be NUL-terminated.
enum NcdStatus ncd_tree_from_newick(const char *newick, struct NcdTree **out);

// Canonical Newick text, as a new string.
//
// # Safety
// `t` must be a live tree handle.
enum NcdStatus ncd_tree_newick(const struct NcdTree *t, char **out);

// Internal nodes on the path between leaves `a` and `b`.
//
// # Safety
// `t` must be a live tree handle; ids must be NUL-terminated.
enum NcdStatus ncd_tree_leaf_distance(const struct NcdTree *t,
                                      const char *a,
                                      const char *b,
                                      uint32_t *out);

// Dendrogram silhouette coefficient given each leaf's class.
//
// # Safety
// `t` must be a live tree handle; `ids` and `classes` hold `n` strings.
enum NcdStatus ncd_tree_dsc(const struct NcdTree *t,
                            const char *const *ids,
                            const char *const *classes,
                            size_t n,
                            double *out);

// Within-class path excess over the errorless minimum.
//
// # Safety
// `t` must be a live tree handle; `ids` and `classes` hold `n` strings.
enum NcdStatus ncd_tree_clustering_error(const struct NcdTree *t,
                                         const char *const *ids,
                                         const char *const *classes,
                                         size_t n,
                                         uint64_t *out);

// Release a tree. Null is ignored.
//
// # Safety
// `t` must come from this library and not have been freed already.
void ncd_tree_free(struct NcdTree *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NCDSTRUCT_H */
