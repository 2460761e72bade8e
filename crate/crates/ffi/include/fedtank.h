/* fedtank C API: deterministic Byzantine-robust federated learning simulator. */

#ifndef FEDTANK_H
#define FEDTANK_H

/* Generated by cbindgen from fedtank-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every FFI call.
typedef enum FtStatus {
  // Success.
  FT_STATUS_OK = 0,
  // A required pointer argument was null.
  FT_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  FT_STATUS_INVALID_UTF8 = 2,
  // The config failed to parse or validate.
  FT_STATUS_INVALID_CONFIG = 3,
  // Dataset files were missing or malformed.
  FT_STATUS_DATA_ERROR = 4,
  // The experiment itself failed.
  FT_STATUS_RUN_ERROR = 5,
  // A round or class index was out of range.
  FT_STATUS_OUT_OF_RANGE = 6,
  // The requested class has no samples in the held-out set.
  FT_STATUS_ABSENT = 7,
  // Output files could not be written.
  FT_STATUS_IO_ERROR = 8,
  // A panic was caught at the FFI boundary.
  FT_STATUS_PANIC = 9,
} FtStatus;

// Opaque resolved experiment configuration.
typedef struct FtConfig FtConfig;

// Opaque completed run: the per-round record stream plus provenance.
typedef struct FtRun FtRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; never freed by the caller.
const char *ft_version(void);

// Message for the most recent failure on this thread; valid until the
// next failing call. Never freed by the caller.
const char *ft_last_error_message(void);

// Parse and validate a JSON config document into a new handle.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum FtStatus ft_config_parse_json(const char *json, struct FtConfig **out);

// Parse and validate a JSON config file into a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum FtStatus ft_config_parse_file(const char *path, struct FtConfig **out);

// Apply one `key=value` override (same syntax as `fedtank run --set`).
//
// # Safety
// `config` must be a live handle and `assignment` NUL-terminated.
enum FtStatus ft_config_set(struct FtConfig *config, const char *assignment);

// Serialize the resolved config as JSON; free with [`ft_string_free`].
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum FtStatus ft_config_to_json(const struct FtConfig *config, char **out);

// Free a config handle. Null is a no-op.
//
// # Safety
// `config` must come from a `ft_config_parse_*` call, freed once.
void ft_config_free(struct FtConfig *config);

// Run the experiment the config describes; blocks until done.
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum FtStatus ft_run_experiment(const struct FtConfig *config, struct FtRun **out);

// Free a run handle. Null is a no-op.
//
// # Safety
// `run` must come from [`ft_run_experiment`], freed once.
void ft_run_free(struct FtRun *run);

// Number of recorded rounds; 0 for a null handle.
//
// # Safety
// `run` must be null or a live handle.
size_t ft_run_n_rounds(const struct FtRun *run);

// Overall held-out accuracy of the global model after a round.
//
// # Safety
// `run` must be a live handle and `out` a valid pointer.
enum FtStatus ft_run_overall_accuracy(const struct FtRun *run, size_t round, double *out);

// Held-out accuracy on one class after a round; `FT_STATUS_ABSENT` if the
// class has no samples.
//
// # Safety
// `run` must be a live handle and `out` a valid pointer.
enum FtStatus ft_run_class_accuracy(const struct FtRun *run,
                                    size_t round,
                                    size_t class_,
                                    double *out);

// Number of models in the final selection of a round (N for
// non-selective aggregators).
//
// # Safety
// `run` must be a live handle and `out` a valid pointer.
enum FtStatus ft_run_n_selected(const struct FtRun *run, size_t round, size_t *out);

// Ballots cast and affirmative ballots in a round (zero outside
// two_layer).
//
// # Safety
// `run` must be a live handle; `cast`/`yes` must be valid pointers.
enum FtStatus ft_run_votes(const struct FtRun *run, size_t round, size_t *cast, size_t *yes);

// How many Byzantine participants ended a round selected.
//
// # Safety
// `run` must be a live handle and `out` a valid pointer.
enum FtStatus ft_run_byzantine_selected(const struct FtRun *run, size_t round, size_t *out);

// Write rounds.csv, rounds.jsonl, manifest.json, and
// resolved_config.json into a directory (created if needed).
//
// # Safety
// `run` must be a live handle and `dir` NUL-terminated.
enum FtStatus ft_run_write_outputs(const struct FtRun *run, const char *dir);

// Full record stream as a JSON array; free with [`ft_string_free`].
//
// # Safety
// `run` must be a live handle and `out` a valid pointer.
enum FtStatus ft_run_records_json(const struct FtRun *run, char **out);

// Free a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must come from a fedtank FFI call, freed once.
void ft_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDTANK_H */
