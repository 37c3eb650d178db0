#ifndef COMPJP_H
#define COMPJP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Number of entries written by [`compjp_result_rank_distribution`].
#define COMPJP_MAX_RANK 8

// Status codes returned by every fallible call.
typedef enum CompjpStatus {
  COMPJP_STATUS_OK = 0,
  // A required pointer argument was null.
  COMPJP_STATUS_NULL_POINTER = 1,
  // Bad string encoding, index or probability.
  COMPJP_STATUS_INVALID_ARGUMENT = 2,
  // Unknown key, malformed value or inconsistent configuration.
  COMPJP_STATUS_CONFIG = 3,
  // Numerical failure during a run.
  COMPJP_STATUS_SIMULATION = 4,
  COMPJP_STATUS_IO = 5,
  // Internal bug; the handle arguments are left untouched.
  COMPJP_STATUS_PANIC = 6,
} CompjpStatus;

// Opaque simulation configuration.
typedef struct CompjpConfig CompjpConfig;

// Opaque result of one run.
typedef struct CompjpResult CompjpResult;

// Metrics of one drop.
typedef struct CompjpDropMetrics {
  uint64_t seed;
  double cell_rate;
  double p5;
  double p50;
  double p95;
  uint64_t candidates;
} CompjpDropMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call into the library on this
// thread.
const char *compjp_last_error_message(void);

// Creates a configuration with the default settings.
struct CompjpConfig *compjp_config_new(void);

// Parses `key = value` lines (`#` starts a comment) on top of the defaults.
//
// # Safety
// `text` must be a NUL-terminated string and `out` writable.
enum CompjpStatus compjp_config_parse(const char *text, struct CompjpConfig **out);

// Sets one key, e.g. `("ue-antennas", "2")`.
//
// # Safety
// `cfg` must come from this library; `key` and `value` NUL-terminated.
enum CompjpStatus compjp_config_set(struct CompjpConfig *cfg, const char *key, const char *value);

// Checks the configuration without running it.
//
// # Safety
// `cfg` must come from this library.
enum CompjpStatus compjp_config_validate(const struct CompjpConfig *cfg);

// # Safety
// `cfg` must come from this library (or be null) and not be used afterwards.
void compjp_config_free(struct CompjpConfig *cfg);

// Runs the experiment. Blocks until done; uses all cores.
//
// # Safety
// `cfg` must come from this library and `out` be writable.
enum CompjpStatus compjp_run(const struct CompjpConfig *cfg, struct CompjpResult **out);

// # Safety
// `r` must come from this library (or be null) and not be used afterwards.
void compjp_result_free(struct CompjpResult *r);

// Mean cell rate over drops, bit/s/Hz.
//
// # Safety
// `r` must come from this library and `out` be writable.
enum CompjpStatus compjp_result_cell_rate(const struct CompjpResult *r, double *out);

// Percentile `p ∈ [0, 1]` of the pooled per-UE long-term rates.
//
// # Safety
// `r` must come from this library and `out` be writable.
enum CompjpStatus compjp_result_ue_percentile(const struct CompjpResult *r, double p, double *out);

// Fraction of scheduled UEs with rank 1..=`COMPJP_MAX_RANK`, written to
// `out[0..len]`; `len` must be at least `COMPJP_MAX_RANK`.
//
// # Safety
// `out` must point to `len` writable doubles.
enum CompjpStatus compjp_result_rank_distribution(const struct CompjpResult *r,
                                                  double *out,
                                                  uintptr_t len);

// Largest per-BS transmit power over `P_BS` seen in any block.
//
// # Safety
// `r` must come from this library and `out` be writable.
enum CompjpStatus compjp_result_max_power_ratio(const struct CompjpResult *r, double *out);

// Number of drops in the result; 0 for a null handle.
//
// # Safety
// `r` must come from this library or be null.
uintptr_t compjp_result_drop_count(const struct CompjpResult *r);

// # Safety
// `r` must come from this library and `out` be writable.
enum CompjpStatus compjp_result_drop_metrics(const struct CompjpResult *r,
                                             uintptr_t index,
                                             struct CompjpDropMetrics *out);

// Writes the one-row results CSV (same format as the command-line tool).
//
// # Safety
// `r` must come from this library; `path` NUL-terminated.
enum CompjpStatus compjp_result_write_csv(const struct CompjpResult *r, const char *path);

// Number of distinct BS subsets of size 1..=`jmax` out of `num_bs`.
// Fails with `INVALID_ARGUMENT` if it does not fit in 64 bits.
//
// # Safety
// `out` must be writable.
enum CompjpStatus compjp_exhaustive_cluster_count(uint64_t num_bs, uint64_t jmax, uint64_t *out);

// Sector antenna gain in dB at angle `theta` (rad) off boresight.
double compjp_antenna_gain_db(double theta, double theta_3db, double sidelobe_floor_db);

// Resource elements per coherence block for the given Doppler (Hz) and
// delay spread (s).
//
// # Safety
// `out` must be writable.
enum CompjpStatus compjp_block_size(double doppler_hz, double delay_spread_s, uintptr_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMPJP_H */
