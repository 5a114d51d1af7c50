#ifndef GALA_H
#define GALA_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum GalaStatus {
  GALA_STATUS_OK = 0,
  GALA_STATUS_INVALID_ARGUMENT = 1,
  GALA_STATUS_CONVERGENCE = 2,
  GALA_STATUS_PROTOCOL = 3,
  GALA_STATUS_CONFIG = 4,
  GALA_STATUS_IO = 5,
  GALA_STATUS_NUMERICAL = 6,
  GALA_STATUS_DOMAIN = 7,
  GALA_STATUS_NULL_POINTER = 8,
  GALA_STATUS_PANIC = 9,
  GALA_STATUS_BUFFER_TOO_SMALL = 10,
} GalaStatus;

typedef struct GalaMixing GalaMixing;

typedef struct GalaTopology GalaTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gala_version(void);

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to `len`) into `buf` and returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t gala_last_error_message(char *buf, size_t len);

/**
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum GalaStatus gala_topology_ring(size_t n, struct GalaTopology **out);

/**
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum GalaStatus gala_topology_full(size_t n, struct GalaTopology **out);

/**
 * Static topology from `count` `(from, to)` pairs stored flat in `edges`.
 *
 * # Safety
 * `edges` must point to `2 * count` values; `out` to a handle slot.
 */
enum GalaStatus gala_topology_custom(size_t n,
                                     const size_t *edges,
                                     size_t count,
                                     struct GalaTopology **out);

/**
 * # Safety
 * `topo` must be null or a handle from a `gala_topology_*` constructor.
 */
void gala_topology_free(struct GalaTopology *topo);

/**
 * # Safety
 * `topo` must be a live handle; `out` a valid pointer to a handle slot.
 */
enum GalaStatus gala_mixing_equal_neighbor(const struct GalaTopology *topo,
                                           uint64_t k,
                                           struct GalaMixing **out);

/**
 * Number of agents (the matrix is `n x n`); 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t gala_mixing_size(const struct GalaMixing *m);

/**
 * Row-major entries into `out` (at least `n * n` values).
 *
 * # Safety
 * `m` must be a live handle; `out` must point to `len` writable values.
 */
enum GalaStatus gala_mixing_entries(const struct GalaMixing *m, double *out, size_t len);

/**
 * # Safety
 * `m` must be a live handle; `out` a valid pointer.
 */
enum GalaStatus gala_mixing_is_doubly_stochastic(const struct GalaMixing *m, bool *out);

/**
 * Stationary distribution of the mixing matrix into `out` (`n` values).
 *
 * # Safety
 * `m` must be a live handle; `out` must point to `len` writable values.
 */
enum GalaStatus gala_stationary_distribution(const struct GalaMixing *m, double *out, size_t len);

/**
 * # Safety
 * `m` must be null or a handle from [`gala_mixing_equal_neighbor`].
 */
void gala_mixing_free(struct GalaMixing *m);

/**
 * Transient consensus bound at `k = len - 1` from the update norms.
 *
 * # Safety
 * `norms` must point to `len` values; `out` must be valid.
 */
enum GalaStatus gala_prop1_bound(double alpha,
                                 double beta,
                                 const double *norms,
                                 size_t len,
                                 double *out);

/**
 * Stationary consensus radius; `Domain` when `beta >= 1`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GalaStatus gala_prop2_bound(double alpha,
                                 double beta,
                                 size_t tau,
                                 size_t b,
                                 double l,
                                 double *out);

/**
 * `||X - 1 mean(X)||_F` for a row-major `n x d` matrix.
 *
 * # Safety
 * `x` must point to `n * d` values; `out` must be valid.
 */
enum GalaStatus gala_consensus_distance(const double *x, size_t n, size_t d, double *out);

/**
 * Runs an experiment config file. `out_dir` may be null to use the
 * configured directory; `passed` receives whether every check held.
 *
 * # Safety
 * String arguments must be NUL-terminated; `passed` null or valid.
 */
enum GalaStatus gala_run_experiment(const char *config_path, const char *out_dir, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GALA_H */
