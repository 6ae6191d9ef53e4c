#ifndef APERTURE_H
#define APERTURE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ApStatus {
  AP_STATUS_OK = 0,
  AP_STATUS_NULL_POINTER = 1,
  AP_STATUS_INVALID_UTF8 = 2,
  AP_STATUS_IO = 3,
  AP_STATUS_PARSE = 4,
  AP_STATUS_SCHEMA = 5,
  AP_STATUS_DIMENSION = 6,
  AP_STATUS_INVALID = 7,
  AP_STATUS_BUFFER_TOO_SMALL = 8,
  AP_STATUS_PANIC = 9,
} ApStatus;

/**
 * Loaded checkpoint.
 */
typedef struct ApModel ApModel;

/**
 * Stepping session bound to one model: accepts protocol lines or named
 * channel values and keeps the history needed for lagged features.
 */
typedef struct ApSession ApSession;

/**
 * Zone model parameters; see [`ap_zone_params_default`].
 */
typedef struct ApZoneParams {
  double capacitance;
  double ua;
  double ua_internal;
  double volume;
  double n_closed;
  double n_open;
  double neighbor_temp;
  double radiator_capacity;
  double radiator_setpoint;
  double radiator_band;
  double person_heat;
  double person_co2;
  double pc_gain;
  double outdoor_co2;
  double solar_aperture;
} ApZoneParams;

typedef struct ApZoneState {
  double temp;
  double co2;
  /**
   * 0 closed, 1 open.
   */
  int window_open;
  int64_t timestamp;
} ApZoneState;

typedef struct ApZoneBoundary {
  double outdoor_temp;
  double occupants;
  /**
   * W
   */
  double solar_gain;
} ApZoneBoundary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ap_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ap_version(void);

/**
 * Loads a checkpoint file into a new model handle.
 */
enum ApStatus ap_model_load(const char *path, struct ApModel **out);

void ap_model_free(struct ApModel *model);

/**
 * Number of raw input features the model expects per row.
 */
enum ApStatus ap_model_input_width(const struct ApModel *model, size_t *out);

/**
 * Schema fingerprint used in the protocol's `HELLO`. Owned by the model.
 */
const char *ap_model_schema_hash(const struct ApModel *model);

/**
 * Name of feature `index` in schema order (lagged features carry a
 * `_lag<minutes>` suffix).
 */
enum ApStatus ap_model_feature_name(const struct ApModel *model,
                                    size_t index,
                                    char *buf,
                                    size_t len,
                                    size_t *needed);

/**
 * Open probabilities for `rows` raw (unscaled) feature rows of
 * `width` values each, stored row-major in `features`.
 */
enum ApStatus ap_model_predict(const struct ApModel *model,
                               const double *features,
                               size_t rows,
                               size_t width,
                               double *probabilities);

/**
 * Opens a stepping session. `impute_toml` may be null to use the built-in
 * fill-ins for channels a simulator does not provide.
 */
enum ApStatus ap_session_new(const struct ApModel *model,
                             const char *impute_toml,
                             int utc_offset_minutes,
                             double threshold,
                             struct ApSession **out);

void ap_session_free(struct ApSession *session);

/**
 * Answers one protocol line (`HELLO`, `STEP`, `BYE`). Protocol errors are
 * replies (`ERR ...`), not failures.
 */
enum ApStatus ap_session_handle_line(struct ApSession *session,
                                     const char *line,
                                     char *reply,
                                     size_t len,
                                     size_t *needed);

/**
 * One structured step: `count` named channel values at `timestamp`
 * (Unix seconds). Writes the window decision (0 or 1) and its probability.
 */
enum ApStatus ap_session_step(struct ApSession *session,
                              int64_t timestamp,
                              const char *const *names,
                              const double *values,
                              size_t count,
                              int *state,
                              double *probability);

/**
 * Clears the lag history of the structured stepping interface.
 */
enum ApStatus ap_session_reset(struct ApSession *session);

/**
 * Fills `out` with the default zone parameters.
 */
enum ApStatus ap_zone_params_default(struct ApZoneParams *out);

/**
 * Advances `state` by `dt` seconds under constant boundary conditions.
 */
enum ApStatus ap_zone_step(const struct ApZoneParams *params,
                           struct ApZoneState *state,
                           const struct ApZoneBoundary *boundary,
                           double dt);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APERTURE_H */
