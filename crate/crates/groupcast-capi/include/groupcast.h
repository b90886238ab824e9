#ifndef GROUPCAST_H
#define GROUPCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a C API call.
 */
typedef enum GcStatus {
  /**
   * The call succeeded.
   */
  GcStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  GcStatus_NullPointer = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  GcStatus_InvalidUtf8 = 2,
  /**
   * The operation failed; `gc_last_error_message` describes why.
   */
  GcStatus_Failed = 3,
  /**
   * The library panicked; treat the handle as poisoned.
   */
  GcStatus_Panic = 4,
} GcStatus;

/**
 * Opaque simulation configuration.
 */
typedef struct GcConfig GcConfig;

/**
 * Opaque completed run: configuration, trace, and report.
 */
typedef struct GcRun GcRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or an empty
 * string when no failure has been recorded. The pointer stays valid until
 * the next failing call on the same thread.
 */
const char *gc_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *gc_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer previously returned by this library.
 */
void gc_string_free(char *s);

/**
 * Creates a configuration with the library defaults.
 */
struct GcConfig *gc_config_new(void);

/**
 * Loads a configuration from a flat `key = value` file; null on failure.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
struct GcConfig *gc_config_load(const char *path);

/**
 * Releases a configuration.
 *
 * # Safety
 * `cfg` must be null or a pointer from `gc_config_new`/`gc_config_load`
 * that has not been freed.
 */
void gc_config_free(struct GcConfig *cfg);

/**
 * Sets one configuration key (dotted name) to a value.
 *
 * # Safety
 * `cfg` must be a live configuration handle; `key` and `value` must be
 * NUL-terminated strings.
 */
enum GcStatus gc_config_set(struct GcConfig *cfg, const char *key, const char *value);

/**
 * Renders the effective configuration; free with `gc_string_free`.
 *
 * # Safety
 * `cfg` must be null or a live configuration handle.
 */
char *gc_config_dump(const struct GcConfig *cfg);

/**
 * Validates the configuration and simulates one run; null on failure.
 *
 * # Safety
 * `cfg` must be null or a live configuration handle.
 */
struct GcRun *gc_run(const struct GcConfig *cfg);

/**
 * Releases a run.
 *
 * # Safety
 * `handle` must be null or an unfreed pointer from `gc_run`.
 */
void gc_run_free(struct GcRun *handle);

/**
 * Looks up one report metric by its `report.csv` name.
 *
 * Undefined metrics (written as `na` in the CSV) fail with a message.
 *
 * # Safety
 * `handle` must be a live run handle, `name` a NUL-terminated string and
 * `value` a valid destination.
 */
enum GcStatus gc_run_metric(const struct GcRun *handle, const char *name, double *value);

/**
 * Number of packets in the run's delivery log.
 *
 * # Safety
 * `handle` must be null or a live run handle.
 */
uintptr_t gc_run_packet_count(const struct GcRun *handle);

/**
 * Writes the run's `report.csv`.
 *
 * # Safety
 * `handle` must be a live run handle and `path` a NUL-terminated string.
 */
enum GcStatus gc_run_write_report(const struct GcRun *handle, const char *path);

/**
 * Writes the run's `trace.csv`.
 *
 * # Safety
 * `handle` must be a live run handle and `path` a NUL-terminated string.
 */
enum GcStatus gc_run_write_trace(const struct GcRun *handle, const char *path);

/**
 * Writes the run's `delivery.csv`.
 *
 * # Safety
 * `handle` must be a live run handle and `path` a NUL-terminated string.
 */
enum GcStatus gc_run_write_delivery(const struct GcRun *handle, const char *path);

/**
 * Writes the effective configuration of the run.
 *
 * # Safety
 * `handle` must be a live run handle and `path` a NUL-terminated string.
 */
enum GcStatus gc_run_write_config(const struct GcRun *handle, const char *path);

/**
 * Plans combined retransmissions over rows of missing-receiver bitmasks.
 *
 * Writes each row's plan index to `plan_of_row` (length `n_rows`; plans
 * are numbered 0.. in schedule order) and the number of plans to
 * `plan_count`.
 *
 * # Safety
 * `row_masks` and `plan_of_row` must point to `n_rows` elements;
 * `plan_count` must be a valid destination.
 */
enum GcStatus gc_plan_combinations(const uint64_t *row_masks,
                                   uintptr_t n_rows,
                                   uint32_t max_m,
                                   uintptr_t *plan_of_row,
                                   uintptr_t *plan_count);

/**
 * Exact minimum number of combined retransmissions for the given rows.
 *
 * Exponential in `n_rows`; rows are capped at the library's oracle limit.
 *
 * # Safety
 * `row_masks` must point to `n_rows` elements and `minimum` must be a
 * valid destination.
 */
enum GcStatus gc_oracle_min_partition(const uint64_t *row_masks,
                                      uintptr_t n_rows,
                                      uint32_t max_m,
                                      uintptr_t *minimum);

/**
 * XOR-combines `n` blocks into `out`, zero-padding shorter blocks.
 *
 * `out` must hold `max(lens)` bytes; that length is written to `out_len`.
 *
 * # Safety
 * `blocks`/`lens` must describe `n` readable buffers; `out` must hold the
 * longest block; `out_len` must be a valid destination.
 */
enum GcStatus gc_xor_encode(const uint8_t *const *blocks,
                            const uintptr_t *lens,
                            uintptr_t n,
                            uint8_t *out,
                            uintptr_t *out_len);

/**
 * Recovers the block at `missing_index` from a combination and the other
 * component blocks (in component order, skipping the missing one).
 *
 * `lens` lists all `n` component lengths; `out` must hold
 * `lens[missing_index]` bytes.
 *
 * # Safety
 * All arrays must match the documented lengths and be readable; `out`
 * must hold the missing block.
 */
enum GcStatus gc_xor_decode(const uint8_t *coded,
                            uintptr_t coded_len,
                            const uintptr_t *lens,
                            uintptr_t n,
                            uintptr_t missing_index,
                            const uint8_t *const *side_blocks,
                            uint8_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUPCAST_H */
