/* C interface to the shor-optics simulator. Generated by cbindgen; do not edit. */

#ifndef SHOR_OPTICS_H
#define SHOR_OPTICS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SoMode {
  SO_MODE_ABSTRACT = 0,
  SO_MODE_CIRCUIT = 1,
  SO_MODE_PHYSICAL = 2,
} SoMode;

/**
 * Result code of every fallible call.
 */
typedef enum SoStatus {
  SO_STATUS_OK = 0,
  SO_STATUS_NULL_POINTER = 1,
  SO_STATUS_INVALID_ARGUMENT = 2,
  SO_STATUS_DOMAIN = 3,
  SO_STATUS_UNSUPPORTED = 4,
  SO_STATUS_RESOURCE = 5,
  SO_STATUS_GRAPH = 6,
  SO_STATUS_CONFIG = 7,
  SO_STATUS_IO = 8,
  SO_STATUS_JSON = 9,
  /**
   * The requested value does not exist (no order, no factors).
   */
  SO_STATUS_NO_RESULT = 10,
  SO_STATUS_BUFFER_TOO_SMALL = 11,
  SO_STATUS_PANIC = 12,
} SoStatus;

/**
 * Rendered interference image.
 */
typedef struct SoImage SoImage;

/**
 * Validated factoring instance.
 */
typedef struct SoProblem SoProblem;

/**
 * Completed pipeline run.
 */
typedef struct SoRun SoRun;

/**
 * Mode-space state.
 */
typedef struct SoState SoState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Free with
 * `so_string_free`.
 */
char *so_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void so_string_free(char *s);

/**
 * # Safety
 * `out_problem` must be a valid pointer.
 */
enum SoStatus so_problem_new(uint64_t modulus,
                             uint64_t base,
                             uint32_t bits,
                             struct SoProblem **out_problem);

/**
 * # Safety
 * `p` must be NULL or a handle from `so_problem_new`, freed once.
 */
void so_problem_free(struct SoProblem *p);

/**
 * Runs the pipeline. `resolution` sets the screen side in pixels for
 * physical mode; 0 keeps the default.
 *
 * # Safety
 * `problem` must be a live handle and `out_run` a valid pointer.
 */
enum SoStatus so_run_pipeline(const struct SoProblem *problem,
                              enum SoMode mode,
                              uint32_t resolution,
                              struct SoRun **out_run);

/**
 * Extracted order; `NO_RESULT` when the readout produced none.
 *
 * # Safety
 * `run` must be a live handle and `out_r` a valid pointer.
 */
enum SoStatus so_run_order(const struct SoRun *run, uint64_t *out_r);

/**
 * Recovered factors `p ≤ q`; `NO_RESULT` when the run found none.
 *
 * # Safety
 * `run` must be a live handle; `out_p`, `out_q` valid pointers.
 */
enum SoStatus so_run_factors(const struct SoRun *run, uint64_t *out_p, uint64_t *out_q);

/**
 * JSON report of the run. Free the string with `so_string_free`.
 *
 * # Safety
 * `run` must be a live handle and `out_json` a valid pointer.
 */
enum SoStatus so_run_report_json(const struct SoRun *run, char **out_json);

/**
 * # Safety
 * `r` must be NULL or a handle from `so_run_pipeline`, freed once.
 */
void so_run_free(struct SoRun *r);

/**
 * Parses a state from its JSON term list
 * (`[{"l": 1, "pol": "H", "re": 1.0, "im": 0.0}, ...]`).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out_state` a valid pointer.
 */
enum SoStatus so_state_from_json(const char *json, struct SoState **out_state);

/**
 * # Safety
 * `state` must be a live handle and `out_json` a valid pointer.
 */
enum SoStatus so_state_to_json(const struct SoState *state, char **out_json);

/**
 * DFT over `2^bits` control labels (`+1, −1, +2, −2, …`), per polarization.
 *
 * # Safety
 * `state` must be a live handle and `out_state` a valid pointer.
 */
enum SoStatus so_state_apply_dft(const struct SoState *state,
                                 uint32_t bits,
                                 struct SoState **out_state);

/**
 * `|⟨a|b⟩|² / (⟨a|a⟩⟨b|b⟩)`.
 *
 * # Safety
 * `a`, `b` must be live handles and `out_f` a valid pointer.
 */
enum SoStatus so_state_fidelity(const struct SoState *a, const struct SoState *b, double *out_f);

/**
 * # Safety
 * `s` must be NULL or a state handle from this library, freed once.
 */
void so_state_free(struct SoState *s);

/**
 * Renders the four-hole interference pattern of `state` on the default
 * screen; `resolution` 0 keeps the default side length.
 *
 * # Safety
 * `state` must be a live handle and `out_image` a valid pointer.
 */
enum SoStatus so_render_state(const struct SoState *state,
                              uint32_t resolution,
                              struct SoImage **out_image);

/**
 * # Safety
 * `image` must be a live handle; `out_width`, `out_height` valid pointers.
 */
enum SoStatus so_image_dims(const struct SoImage *image, size_t *out_width, size_t *out_height);

/**
 * Copies the row-major intensities (row 0 at the top) into `buf`, which
 * must hold `width × height` values.
 *
 * # Safety
 * `image` must be a live handle and `buf` valid for `len` writes.
 */
enum SoStatus so_image_copy(const struct SoImage *image, double *buf, size_t len);

/**
 * # Safety
 * `i` must be NULL or a handle from `so_render_state`, freed once.
 */
void so_image_free(struct SoImage *i);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHOR_OPTICS_H */
