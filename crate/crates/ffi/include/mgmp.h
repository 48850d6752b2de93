#ifndef MGMP_H
#define MGMP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Smoother on the fine levels.
typedef enum MgmpSmoother {
  MGMP_SMOOTHER_IC0 = 0,
  MGMP_SMOOTHER_ICT = 1,
} MgmpSmoother;

// Result code of every fallible call.
typedef enum MgmpStatus {
  MGMP_STATUS_OK = 0,
  MGMP_STATUS_NULL_POINTER = 1,
  MGMP_STATUS_INVALID_ARGUMENT = 2,
  MGMP_STATUS_DIMENSION_MISMATCH = 3,
  MGMP_STATUS_PRECONDITION = 4,
  MGMP_STATUS_BREAKDOWN = 5,
  MGMP_STATUS_IO = 6,
  MGMP_STATUS_PARSE = 7,
  MGMP_STATUS_OVERFLOW = 8,
  MGMP_STATUS_PANIC = 9,
} MgmpStatus;

// Why an outer iteration stopped.
typedef enum MgmpStopReason {
  MGMP_STOP_REASON_CONVERGED = 0,
  MGMP_STOP_REASON_MAX_ITERATIONS = 1,
  MGMP_STOP_REASON_DIVERGED = 2,
  MGMP_STOP_REASON_STAGNATED = 3,
  MGMP_STOP_REASON_CYCLE_ERROR = 4,
} MgmpStopReason;

// Opaque multigrid hierarchy.
typedef struct MgmpHierarchy MgmpHierarchy;

// Opaque V-cycle with IC smoothing bound to a hierarchy snapshot.
typedef struct MgmpSolver MgmpSolver;

// Summary of an IR or PCG solve.
typedef struct MgmpSolveSummary {
  size_t iterations;
  bool converged;
  enum MgmpStopReason reason;
  double final_rel_residual;
  // Plateau of the monitored quantity, or NaN when none was detected.
  double plateau;
} MgmpSolveSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len - 1` bytes). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t mgmp_last_error_message(char *buf, size_t len);

// Build a scaled and filtered 1D Poisson hierarchy of degree `degree` with
// `coarse_elems` elements on level 0 and `n_levels` levels.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum MgmpStatus mgmp_hierarchy_build_fem1d(size_t degree,
                                           size_t coarse_elems,
                                           size_t n_levels,
                                           bool scale,
                                           struct MgmpHierarchy **out);

// Load a hierarchy directory of MatrixMarket files.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` a valid handle slot.
enum MgmpStatus mgmp_hierarchy_load(const char *dir, struct MgmpHierarchy **out);

// Save a hierarchy to a directory.
//
// # Safety
// `h` must be a live handle; `dir` a NUL-terminated string.
enum MgmpStatus mgmp_hierarchy_save(const struct MgmpHierarchy *h, const char *dir);

// Release a hierarchy. Null is ignored.
//
// # Safety
// `h` must be null or a handle not yet freed.
void mgmp_hierarchy_free(struct MgmpHierarchy *h);

// Number of levels `J + 1`.
//
// # Safety
// `h` must be a live handle; `out` valid.
enum MgmpStatus mgmp_hierarchy_num_levels(const struct MgmpHierarchy *h, size_t *out);

// Number of unknowns on level `level`.
//
// # Safety
// `h` must be a live handle; `out` valid.
enum MgmpStatus mgmp_hierarchy_level_dim(const struct MgmpHierarchy *h, size_t level, size_t *out);

// Copy the finest-level right-hand side into `out` (length `n`).
//
// # Safety
// `h` must be a live handle; `out` must hold `n` doubles.
enum MgmpStatus mgmp_hierarchy_rhs(const struct MgmpHierarchy *h, double *out, size_t n);

// Create a V-cycle with IC smoothing for the variant named
// `dot-fact-store-solve` (e.g. `"d-d-s-s"`). `dpt` is used by ICT only;
// `symmetric` adds post-smoothing.
//
// # Safety
// `h` must be a live handle; `variant` a NUL-terminated string; `out` valid.
enum MgmpStatus mgmp_solver_new(const struct MgmpHierarchy *h,
                                const char *variant,
                                enum MgmpSmoother smoother,
                                double dpt,
                                bool symmetric,
                                struct MgmpSolver **out);

// Release a solver. Null is ignored.
//
// # Safety
// `s` must be null or a handle not yet freed.
void mgmp_solver_free(struct MgmpSolver *s);

// Finest-level dimension of a solver.
//
// # Safety
// `s` must be a live handle; `out` valid.
enum MgmpStatus mgmp_solver_dim(const struct MgmpSolver *s, size_t *out);

// One finite precision V-cycle: `out = V(f)`.
//
// # Safety
// `s` must be a live handle; `f` and `out` must hold `n` doubles.
enum MgmpStatus mgmp_solver_vcycle(const struct MgmpSolver *s,
                                   const double *f,
                                   double *out,
                                   size_t n);

// Iterative refinement with one V-cycle per step from `x = 0`. `stop` is
// `relres:TOL`, `anorm:TOL` or `relanorm:TOL`. The solution is written to
// `x`; `summary` may be null.
//
// # Safety
// `s` must be a live handle; `b` and `x` must hold `n` doubles; `stop` a
// NUL-terminated string; `summary` null or valid.
enum MgmpStatus mgmp_solver_ir(const struct MgmpSolver *s,
                               const double *b,
                               double *x,
                               size_t n,
                               const char *stop,
                               size_t max_iter,
                               struct MgmpSolveSummary *summary);

// Conjugate gradients preconditioned by one V-cycle per iteration. Same
// arguments as [`mgmp_solver_ir`].
//
// # Safety
// As for [`mgmp_solver_ir`].
enum MgmpStatus mgmp_solver_pcg(const struct MgmpSolver *s,
                                const double *b,
                                double *x,
                                size_t n,
                                const char *stop,
                                size_t max_iter,
                                struct MgmpSolveSummary *summary);

// Round `x` to the format named `label` (`d`, `s`, `h`, `digits-N`,
// `bits-N`).
//
// # Safety
// `label` must be a NUL-terminated string; `out` valid.
enum MgmpStatus mgmp_round_scalar(double x, const char *label, double *out);

// Unit roundoff `2^{-t}` of the format named `label`.
//
// # Safety
// `label` must be a NUL-terminated string; `out` valid.
enum MgmpStatus mgmp_unit_roundoff(const char *label, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MGMP_H */
