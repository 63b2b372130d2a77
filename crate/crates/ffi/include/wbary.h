#ifndef WBARY_H
#define WBARY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define WB_OK 0

#define WB_ERR_PARSE 1

#define WB_ERR_INVARIANT 2

#define WB_ERR_DIMENSION 3

#define WB_ERR_RANGE 4

#define WB_ERR_ABS_CONTINUITY 5

#define WB_ERR_SIZE 6

#define WB_ERR_INFEASIBLE 7

#define WB_ERR_SOLVER 8

#define WB_ERR_ORACLE_SCOPE 9

#define WB_ERR_SCALE 10

#define WB_ERR_CONSTRAINT 11

#define WB_ERR_FAMILY 12

#define WB_ERR_EFFICIENCY 13

#define WB_ERR_DOMAIN 14

#define WB_ERR_GRID_MISMATCH 15

#define WB_ERR_NO_DECREASE 16

#define WB_ERR_INSUFFICIENT_DATA 17

#define WB_ERR_USAGE 18

#define WB_ERR_IO 19

// A required pointer argument was null.
#define WB_ERR_NULL 100

// A string argument was not valid UTF-8.
#define WB_ERR_UTF8 101

// The library panicked; the handle arguments should be considered unusable.
#define WB_ERR_PANIC 102

// A caller buffer is too small.
#define WB_ERR_BUFFER 103

// Affine deformation family.
typedef struct WbFamily WbFamily;

// Discrete probability measure.
typedef struct WbMeasure WbMeasure;

// Objectives at the population barycenter.
typedef struct {
  double primal;
  double dual;
  double gap;
  double relative_gap;
} WbDualityReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library from the same thread.
const char *wb_last_error_message(void);

// Creates a measure from `n` points in row-major order (`n * dim` values)
// and `n` weights. `lo` and `hi` give the domain box (`dim` values each);
// when both are null the bounding box of the points is used.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` must be writable.
int32_t wb_measure_new(size_t dim,
                       const double *points,
                       const double *weights,
                       size_t n,
                       const double *lo,
                       const double *hi,
                       WbMeasure **out);

// Loads a measure from a JSON or CSV file; grid densities become cell-center atoms.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
int32_t wb_measure_load(const char *path, WbMeasure **out);

// # Safety
// `m` must come from this library and not be used afterwards. Null is ignored.
void wb_measure_free(WbMeasure *m);

// Number of atoms, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
size_t wb_measure_len(const WbMeasure *m);

// Dimension, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
size_t wb_measure_dim(const WbMeasure *m);

// Copies the `len * dim` point coordinates (row-major) into `buf`.
//
// # Safety
// `buf` must be writable for `cap` values.
int32_t wb_measure_points(const WbMeasure *m, double *buf, size_t cap);

// Copies the `len` weights into `buf`.
//
// # Safety
// `buf` must be writable for `cap` values.
int32_t wb_measure_weights(const WbMeasure *m, double *buf, size_t cap);

// Squared 2-Wasserstein distance by exact linear programming. Both measures
// must declare the same domain box.
//
// # Safety
// Handles must be live; `out` must be writable.
int32_t wb_w2sq(const WbMeasure *a, const WbMeasure *b, double *out);

// Squared 2-Wasserstein distance of two 1D measures via quantile functions.
//
// # Safety
// Handles must be live; `out` must be writable.
int32_t wb_w2sq_1d(const WbMeasure *a, const WbMeasure *b, double *out);

// Equal-weight barycenter of `count` 1D measures.
//
// # Safety
// `items` must hold `count` live handles; `out` must be writable.
int32_t wb_barycenter_1d(const WbMeasure *const *items, size_t count, WbMeasure **out);

// Free-support fixed-point barycenter, seeded from the first input's atoms.
// All inputs must declare the same domain box.
// `tol <= 0` selects the default tolerance. `iterations` may be null.
//
// # Safety
// `items` must hold `count` live handles; `out` must be writable.
int32_t wb_barycenter_fixed_support(const WbMeasure *const *items,
                                    size_t count,
                                    size_t max_iter,
                                    double tol,
                                    WbMeasure **out,
                                    size_t *iterations);

// Loads a family description file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
int32_t wb_family_load(const char *path, WbFamily **out);

// # Safety
// `f` must come from this library and not be used afterwards. Null is ignored.
void wb_family_free(WbFamily *f);

// Primal and dual objectives on `nodes` quadrature nodes per parameter axis
// and a dual grid of `cells` cells per axis; members use the same grid.
//
// # Safety
// `f` must be live; `out` must be writable.
int32_t wb_duality_check(const WbFamily *f, size_t nodes, size_t cells, WbDualityReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WBARY_H */
