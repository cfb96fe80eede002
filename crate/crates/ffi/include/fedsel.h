#ifndef FEDSEL_H
#define FEDSEL_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The non-zero values below 5 match the CLI exit codes.
 */
typedef enum FedselStatus {
  FEDSEL_STATUS_OK = 0,
  FEDSEL_STATUS_CONFIG = 2,
  FEDSEL_STATUS_RUNTIME = 3,
  FEDSEL_STATUS_IO = 4,
  FEDSEL_STATUS_NULL_POINTER = 5,
  FEDSEL_STATUS_PANIC = 6,
  /**
   * Output buffer too small; the needed length was still written.
   */
  FEDSEL_STATUS_BUFFER_TOO_SMALL = 7,
  FEDSEL_STATUS_INVALID_UTF8 = 8,
} FedselStatus;

/**
 * An experiment configuration.
 */
typedef struct FedselConfig FedselConfig;

/**
 * The outcome of one experiment run.
 */
typedef struct FedselResult FedselResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *fedsel_version(void);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next fedsel call on the same thread.
 */
const char *fedsel_last_error(void);

/**
 * Loads and validates a TOML config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FedselStatus fedsel_config_load(const char *path, struct FedselConfig **out);

/**
 * Parses a config from TOML text. Relative spec paths resolve against the
 * working directory.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum FedselStatus fedsel_config_parse(const char *toml, struct FedselConfig **out);

/**
 * Overrides the master seed.
 *
 * # Safety
 * `config` must come from `fedsel_config_load` or `fedsel_config_parse`.
 */
enum FedselStatus fedsel_config_set_seed(struct FedselConfig *config, uint64_t seed);

/**
 * Overrides the round budget (at least 1).
 *
 * # Safety
 * `config` must come from `fedsel_config_load` or `fedsel_config_parse`.
 */
enum FedselStatus fedsel_config_set_rounds(struct FedselConfig *config, uintptr_t rounds);

/**
 * # Safety
 * `config` must be null or an unfreed handle.
 */
void fedsel_config_free(struct FedselConfig *config);

/**
 * Runs the experiment described by `config`.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum FedselStatus fedsel_run(const struct FedselConfig *config, struct FedselResult **out);

/**
 * Number of round records, the bootstrap round included. 0 for null.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
uintptr_t fedsel_result_num_rounds(const struct FedselResult *result);

/**
 * Copies the per-round test accuracy into `buf`. `*written` always receives
 * the series length; pass a null buffer with capacity 0 to query it.
 *
 * # Safety
 * `buf` must have room for `capacity` doubles; `written` must be writable.
 */
enum FedselStatus fedsel_result_accuracy(const struct FedselResult *result,
                                         double *buf,
                                         uintptr_t capacity,
                                         uintptr_t *written);

/**
 * Copies participation counts, ascending by client id, into the parallel
 * arrays `ids` and `counts`. Sizing follows `fedsel_result_accuracy`.
 *
 * # Safety
 * `ids` and `counts` must each have room for `capacity` elements.
 */
enum FedselStatus fedsel_result_participation(const struct FedselResult *result,
                                              uint32_t *ids,
                                              uint64_t *counts,
                                              uintptr_t capacity,
                                              uintptr_t *written);

/**
 * The rounds table as CSV text. Free with `fedsel_string_free`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FedselStatus fedsel_result_rounds_csv(const struct FedselResult *result, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void fedsel_string_free(char *s);

/**
 * Writes CSV tables, SVG charts and the config echo into `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string.
 */
enum FedselStatus fedsel_result_write_artifacts(const struct FedselResult *result, const char *dir);

/**
 * # Safety
 * `result` must be null or an unfreed handle.
 */
void fedsel_result_free(struct FedselResult *result);

/**
 * Trailing moving average with leading partial windows; `out` receives
 * `len` values.
 *
 * # Safety
 * `series` and `out` must each hold `len` doubles.
 */
enum FedselStatus fedsel_moving_average(const double *series,
                                        uintptr_t len,
                                        uintptr_t window,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDSEL_H */
