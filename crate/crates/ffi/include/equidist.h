#ifndef EQUIDIST_H
#define EQUIDIST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum EquidistStatus {
  EQUIDIST_STATUS_OK = 0,
  EQUIDIST_STATUS_NULL_POINTER = 1,
  EQUIDIST_STATUS_INVALID_ARGUMENT = 2,
  EQUIDIST_STATUS_INVALID_MAP = 3,
  EQUIDIST_STATUS_SOLVER_FAILURE = 4,
  EQUIDIST_STATUS_EXCEPTIONAL_START = 5,
  EQUIDIST_STATUS_TREE_TOO_LARGE = 6,
  EQUIDIST_STATUS_BUFFER_TOO_SMALL = 7,
  EQUIDIST_STATUS_IO = 8,
  EQUIDIST_STATUS_CONFIG = 9,
  EQUIDIST_STATUS_PANIC = 10,
} EquidistStatus;

// Weighted preimages of a point under an iterate.
typedef struct EquidistFiber EquidistFiber;

// A holomorphic endomorphism together with its declared exceptional set.
typedef struct EquidistMap EquidistMap;

// Monte Carlo sample of the equilibrium measure.
typedef struct EquidistMeasure EquidistMeasure;

// Fiber solver bound to one map.
typedef struct EquidistSolver EquidistSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t equidist_last_error(char *buf, size_t cap);

// Creates a preset map: "z2", "z3", "basilica", "cheb" or "torus2".
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum EquidistStatus equidist_map_preset(const char *name, struct EquidistMap **out);

// Projective dimension k of the map, or 0 for a null handle.
//
// # Safety
// `map` must be null or a live handle.
size_t equidist_map_dim(const struct EquidistMap *map);

// Algebraic degree d of the map, or 0 for a null handle.
//
// # Safety
// `map` must be null or a live handle.
size_t equidist_map_degree(const struct EquidistMap *map);

// Evaluates the map at a point; the image is written in canonical form.
//
// # Safety
// `coords` must hold `len` doubles and `out_coords` `out_cap` doubles.
enum EquidistStatus equidist_map_evaluate(const struct EquidistMap *map,
                                          const double *coords,
                                          size_t len,
                                          double *out_coords,
                                          size_t out_cap);

// # Safety
// `map` must be null or a handle not yet freed.
void equidist_map_free(struct EquidistMap *map);

// Creates a fiber solver with default settings. The map handle may be freed
// afterwards.
//
// # Safety
// `map` must be a live handle; `out` must be writable.
enum EquidistStatus equidist_solver_new(const struct EquidistMap *map, struct EquidistSolver **out);

// # Safety
// `solver` must be null or a handle not yet freed.
void equidist_solver_free(struct EquidistSolver *solver);

// Computes the weighted fiber of f^n over a point; n = 1 is the plain fiber.
//
// # Safety
// `coords` must hold `len` doubles; `out` must be writable.
enum EquidistStatus equidist_fiber_new(const struct EquidistSolver *solver,
                                       const double *coords,
                                       size_t len,
                                       size_t n,
                                       struct EquidistFiber **out);

// Number of distinct points in the fiber, or 0 for a null handle.
//
// # Safety
// `fiber` must be null or a live handle.
size_t equidist_fiber_len(const struct EquidistFiber *fiber);

// Sum of multiplicities, saturating at `UINT64_MAX`.
//
// # Safety
// `fiber` must be null or a live handle.
uint64_t equidist_fiber_total_multiplicity(const struct EquidistFiber *fiber);

// Largest image residual over the fiber, or NaN for a null handle.
//
// # Safety
// `fiber` must be null or a live handle.
double equidist_fiber_residual(const struct EquidistFiber *fiber);

// Copies point `index` and its multiplicity out of the fiber.
//
// # Safety
// `out_coords` must hold `out_cap` doubles; `multiplicity` must be null or writable.
enum EquidistStatus equidist_fiber_point(const struct EquidistFiber *fiber,
                                         size_t index,
                                         double *out_coords,
                                         size_t out_cap,
                                         size_t *multiplicity);

// # Safety
// `fiber` must be null or a handle not yet freed.
void equidist_fiber_free(struct EquidistFiber *fiber);

// Samples the equilibrium measure by `samples` random backward walks of
// length `burn_in`, started away from the declared exceptional set.
// Identical arguments give identical samples.
//
// # Safety
// `solver` must be a live handle; `out` must be writable.
enum EquidistStatus equidist_mu_estimate(const struct EquidistSolver *solver,
                                         size_t samples,
                                         size_t burn_in,
                                         uint64_t seed,
                                         struct EquidistMeasure **out);

// Pairs the sample with a builtin observable (for example "X", "Z", "re_zw")
// and reports the mean with its batch-means standard error.
//
// # Safety
// `label` must be a NUL-terminated string; `value` and `stderr` must be writable.
enum EquidistStatus equidist_measure_pair(const struct EquidistMeasure *measure,
                                          const char *label,
                                          double *value,
                                          double *stderr);

// # Safety
// `measure` must be null or a handle not yet freed.
void equidist_measure_free(struct EquidistMeasure *measure);

// Runs every experiment of a JSON config file, writing reports to its output
// directory. `exit_code` receives 0 when no experiment errored and 1 otherwise.
//
// # Safety
// `config_path` must be a NUL-terminated string; `exit_code` must be writable.
enum EquidistStatus equidist_run_suite(const char *config_path, int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EQUIDIST_H */
