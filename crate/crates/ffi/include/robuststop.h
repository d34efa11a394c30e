#ifndef ROBUSTSTOP_H
#define ROBUSTSTOP_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_UTF8 = 2,
  RS_STATUS_INVALID_CONFIG = 3,
  RS_STATUS_SIZE_LIMIT = 4,
  RS_STATUS_INTERNAL = 5,
} RsStatus;

/**
 * Robust envelope on a solver's tree.
 */
typedef struct RsSolution RsSolution;

/**
 * A parsed configuration together with its scenario tree.
 */
typedef struct RsSolver RsSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rs_last_error(void);

/**
 * Parses a JSON configuration and builds its scenario tree.
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string and `out` a valid
 * pointer to writable storage.
 */
enum RsStatus rs_solver_new(const char *config_json, struct RsSolver **out);

/**
 * Number of nodes in the solver's tree, or 0 for a null handle.
 *
 * # Safety
 * `solver` must be null or a live handle from [`rs_solver_new`].
 */
size_t rs_solver_node_count(const struct RsSolver *solver);

/**
 * Solves for the robust envelope with the configured stop band.
 *
 * # Safety
 * `solver` must be a live handle and `out` a valid pointer.
 */
enum RsStatus rs_solver_solve(const struct RsSolver *solver, struct RsSolution **out);

/**
 * Envelope value at the root.
 *
 * # Safety
 * `solution` must be a live handle and `out` a valid pointer.
 */
enum RsStatus rs_solution_root_value(const struct RsSolution *solution, double *out);

/**
 * Copies the per-node envelope values (breadth-first order) into `buf`.
 *
 * At most `len` values are written; `written` receives the full node count
 * so a caller can size the buffer with a first call passing `len = 0`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles (may be null when `len` is 0)
 * and `written` must be a valid pointer.
 */
enum RsStatus rs_solution_copy_values(const struct RsSolution *solution,
                                      double *buf,
                                      size_t len,
                                      size_t *written);

/**
 * Game values by full enumeration, as a JSON report.
 *
 * # Safety
 * `solver` must be a live handle and `out` a valid pointer. The returned
 * string must be released with [`rs_string_free`].
 */
enum RsStatus rs_solver_oracle_json(const struct RsSolver *solver, char **out);

/**
 * Runs the verification suite and returns its JSON report.
 *
 * `suite` is a comma-separated list of check names, or null for the
 * configured suite. A failing check is reported in the JSON with status
 * `RS_STATUS_OK`; only setup errors produce a non-zero status.
 *
 * # Safety
 * `solver` must be a live handle, `suite` null or a valid string, and `out`
 * a valid pointer. Release the string with [`rs_string_free`].
 */
enum RsStatus rs_solver_verify_json(const struct RsSolver *solver,
                                    const char *suite,
                                    uint64_t seed,
                                    char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void rs_string_free(char *s);

/**
 * # Safety
 * `solver` must be null or a handle from [`rs_solver_new`], freed once.
 */
void rs_solver_free(struct RsSolver *solver);

/**
 * # Safety
 * `solution` must be null or a handle from [`rs_solver_solve`], freed once.
 */
void rs_solution_free(struct RsSolution *solution);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUSTSTOP_H */
