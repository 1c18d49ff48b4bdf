#ifndef JINGFANG_H
#define JINGFANG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum JfStatus {
  JF_STATUS_OK = 0,
  JF_STATUS_NULL_POINTER = 1,
  JF_STATUS_INVALID_UTF8 = 2,
  JF_STATUS_INVALID_ARGUMENT = 3,
  JF_STATUS_CONFIG = 4,
  JF_STATUS_BACKEND = 5,
  JF_STATUS_FAILED = 6,
  JF_STATUS_PANIC = 7,
} JfStatus;

// Loaded engine: configuration, backends, prescription database.
typedef struct JfEngine JfEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static string; do not free.
const char *jf_version(void);

// Message for the last failed call on this thread, or null. The caller
// owns the copy and frees it with [`jf_string_free`].
char *jf_last_error(void);

// # Safety
// `s` must be null or a string returned by this library, freed only once.
void jf_string_free(char *s);

// Loads an engine from a JSON configuration file.
//
// # Safety
// `config_path` must be a valid C string and `out` valid for one write.
enum JfStatus jf_engine_open(const char *config_path, struct JfEngine **out);

// # Safety
// `engine` must be null or a handle from [`jf_engine_open`], freed only once.
void jf_engine_free(struct JfEngine *engine);

// Number of prescriptions in the engine's database, or 0 for null.
//
// # Safety
// `engine` must be null or a live handle.
uintptr_t jf_engine_prescription_count(const struct JfEngine *engine);

// Syndrome differentiation plus prescription retrieval for a medical
// record given as JSON. Writes the diagnosis as JSON to `out_json`.
//
// # Safety
// `engine` must be a live handle, `record_json` a valid C string and
// `out_json` valid for one write.
enum JfStatus jf_engine_diagnose(const struct JfEngine *engine,
                                 const char *record_json,
                                 char **out_json);

// Unigram BLEU with brevity penalty.
//
// # Safety
// Both strings must be valid C strings and `out` valid for one write.
enum JfStatus jf_bleu1(const char *candidate, const char *reference, double *out);

// Reciprocal rank fusion of two ranked id lists (JSON arrays of strings).
// Writes the fused hits as a JSON array.
//
// # Safety
// Inputs must be valid C strings and `out_json` valid for one write.
enum JfStatus jf_rrf_fuse(const char *sparse_json,
                          const char *dense_json,
                          double k,
                          char **out_json);

// Support-weighted precision, recall and F1 over parallel label lists
// (JSON arrays of strings). Writes the metrics as JSON.
//
// # Safety
// Inputs must be valid C strings and `out_json` valid for one write.
enum JfStatus jf_weighted_metrics(const char *predictions_json,
                                  const char *gold_json,
                                  char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JINGFANG_H */
