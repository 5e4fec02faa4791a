#ifndef COLLIDESIM_H
#define COLLIDESIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Library errors use the same values as the CLI exit codes.
 */
typedef enum CsStatus {
  CS_STATUS_OK = 0,
  /**
   * Config, parse, dimension or argument error.
   */
  CS_STATUS_INVALID_INPUT = 1,
  CS_STATUS_DENSE_LIMIT = 2,
  /**
   * Numerical failure or malformed program.
   */
  CS_STATUS_NUMERICAL = 3,
  /**
   * A validation criterion ran and failed.
   */
  CS_STATUS_VALIDATION_FAILED = 4,
  CS_STATUS_NULL_POINTER = 5,
  CS_STATUS_PANIC = 6,
} CsStatus;

/**
 * Key/value experiment configuration.
 */
typedef struct CsConfig CsConfig;

/**
 * Result of one estimate.
 */
typedef struct CsReport CsReport;

/**
 * Scalar fields of a report.
 */
typedef struct CsReportSummary {
  double mu;
  double std_error;
  uint64_t runs;
  double zeta;
  double cnot_per_run_mean;
  double depth_proxy_mean;
  uint64_t hoeffding_runs;
} CsReportSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *cs_last_error(void);

/**
 * Configuration with every key at its default.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CsStatus cs_config_new(struct CsConfig **out);

/**
 * Load a `.json` or key/value config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CsStatus cs_config_load(const char *path, struct CsConfig **out);

/**
 * Set one `section.key` to `value`.
 *
 * # Safety
 * `cfg` must come from `cs_config_new` or `cs_config_load`; strings must be NUL-terminated.
 */
enum CsStatus cs_config_set(struct CsConfig *cfg, const char *key, const char *value);

/**
 * Copy the 16-hex-digit config hash into `buf` (at least 17 bytes).
 *
 * # Safety
 * `cfg` must be a live handle and `buf` must hold `len` bytes.
 */
enum CsStatus cs_config_hash(const struct CsConfig *cfg, char *buf, uintptr_t len);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void cs_config_free(struct CsConfig *cfg);

/**
 * Run the configured estimate; no files are written.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum CsStatus cs_estimate(const struct CsConfig *cfg, struct CsReport **out);

/**
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum CsStatus cs_report_summary(const struct CsReport *report, struct CsReportSummary *out);

/**
 * Copy up to `len` per-run values into `buf`; `written` receives the total available.
 *
 * # Safety
 * `report` must be a live handle, `buf` must hold `len` doubles (or be null when `len` is 0).
 */
enum CsStatus cs_report_samples(const struct CsReport *report,
                                double *buf,
                                uintptr_t len,
                                uintptr_t *written);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void cs_report_free(struct CsReport *report);

/**
 * Exact values at the configured `dynamics.t`. `lindblad` is NaN for custom models.
 *
 * # Safety
 * `cfg` must be a live handle; the outputs must be valid pointers.
 */
enum CsStatus cs_oracle(const struct CsConfig *cfg, double *lindblad, double *collision);

/**
 * Run one acceptance criterion (1-9). Returns `ValidationFailed` if it ran and failed.
 */
enum CsStatus cs_validate(uint8_t id);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLLIDESIM_H */
