/* C interface to the F2C skeleton action-recognition library.
 *
 * Every fallible call returns an f2c_status; on failure f2c_last_error()
 * holds a message for the calling thread. Strings returned through char**
 * are owned by the caller and released with f2c_string_free. Handles are
 * opaque and released with their *_free function (NULL is accepted).
 *
 * Option strings are newline- or ';'-separated "key=value" pairs.
 */
#ifndef F2C_F2C_H
#define F2C_F2C_H

#include <stddef.h>
#include <stdint.h>

#if defined(F2C_BUILDING_LIBRARY)
#define F2C_API __attribute__((visibility("default")))
#else
#define F2C_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum f2c_status {
  F2C_OK = 0,
  F2C_E_ARGUMENT = 1,
  F2C_E_PARSE = 2,
  F2C_E_TOO_SHORT = 3,
  F2C_E_CONFIG = 4,
  F2C_E_IO = 5,
  F2C_E_FORMAT = 6,
  F2C_E_CONTRACT = 7,
  F2C_E_NUMERIC = 8,
  F2C_E_INTERNAL = 9
} f2c_status;

typedef struct f2c_dataset f2c_dataset;
typedef struct f2c_arch f2c_arch;
typedef struct f2c_cache f2c_cache;
typedef struct f2c_model f2c_model;

F2C_API const char* f2c_version(void);
/* "OK", "E_PARSE", ... */
F2C_API const char* f2c_status_name(f2c_status status);
F2C_API const char* f2c_last_error(void);
F2C_API void f2c_string_free(char* s);
/* Worker threads for library-internal parallelism; 0 = hardware default. */
F2C_API void f2c_set_threads(int threads);

/* ---- raw skeleton datasets ---------------------------------------- */

/* kind: "ntu" (directory of .skeleton files), "sbu" (SBU set tree) or
 * "cache" (directory written by f2c_dataset_save). */
F2C_API f2c_status f2c_dataset_load(const char* path, const char* kind, f2c_dataset** out);
/* joints: 25 (one subject, NTU-like ids) or 15 (two subjects, SBU-like ids). */
F2C_API f2c_status f2c_dataset_synth(int classes, int per_class, int frames, int joints, uint64_t seed,
                                     f2c_dataset** out);
F2C_API f2c_status f2c_dataset_filter_blocklist(f2c_dataset* ds, const char* path, size_t* removed);
F2C_API f2c_status f2c_dataset_save(const f2c_dataset* ds, const char* dir);
F2C_API size_t f2c_dataset_size(const f2c_dataset* ds);
/* key=value summary: kind, classes, joints, sequences, frames, digest. */
F2C_API f2c_status f2c_dataset_info(const f2c_dataset* ds, char** text);
F2C_API f2c_status f2c_dataset_digest(const f2c_dataset* ds, char** hex);
/* protocol: "cs", "cv" or "sbu-5fold"; counts of each side. */
F2C_API f2c_status f2c_dataset_split(const f2c_dataset* ds, const char* protocol, int fold, size_t* train,
                                     size_t* test);
F2C_API void f2c_dataset_free(f2c_dataset* ds);

/* ---- architectures ------------------------------------------------- */

/* preset: "default" or "mini" (NULL = default). config_path may be NULL;
 * its arch.* keys override the preset. */
F2C_API f2c_status f2c_arch_create(const char* preset, const char* config_path, int classes, f2c_arch** out);
F2C_API f2c_status f2c_arch_ledger(const f2c_arch* arch, char** text);
F2C_API f2c_status f2c_arch_param_table(const f2c_arch* arch, char** text);
F2C_API uint64_t f2c_arch_param_count(const f2c_arch* arch);
F2C_API void f2c_arch_free(f2c_arch* arch);

/* ---- encoding ------------------------------------------------------ */

/* Encodes every sequence into an image cache sized for `arch`.
 * options: protocol, fold, margin, crops, pair_swap, preview,
 * limb_normalize. Defaults follow the dataset kind. */
F2C_API f2c_status f2c_encode(const f2c_dataset* ds, const f2c_arch* arch, const char* options, const char* out_dir,
                              char** summary);

F2C_API f2c_status f2c_cache_open(const char* dir, f2c_cache** out);
F2C_API size_t f2c_cache_size(const f2c_cache* cache);
F2C_API int f2c_cache_classes(const f2c_cache* cache);
/* Contents of cache.cfg. */
F2C_API f2c_status f2c_cache_info(const f2c_cache* cache, char** text);
F2C_API void f2c_cache_free(f2c_cache* cache);

/* ---- training and evaluation -------------------------------------- */

/* config_path (may be NULL) supplies train.* keys; overrides (may be NULL)
 * take precedence. Writes metrics.tsv, best.f2cp, last.f2cp and
 * manifest.txt into out_dir. */
F2C_API f2c_status f2c_train(const f2c_cache* cache, const f2c_arch* arch, const char* config_path,
                             const char* overrides, const char* out_dir, char** summary);

/* precision: "f64" or "f32" (NULL = f64). */
F2C_API f2c_status f2c_model_load(const char* path, const char* precision, f2c_model** out);
F2C_API f2c_status f2c_model_save(const f2c_model* model, const char* path);
F2C_API uint64_t f2c_model_param_count(const f2c_model* model);
/* Class probabilities for one cache entry (centre crop). */
F2C_API f2c_status f2c_model_predict(const f2c_model* model, const f2c_cache* cache, size_t entry, double* probs,
                                     size_t n_probs, int* predicted);
F2C_API void f2c_model_free(f2c_model* model);

/* split: "train", "val", "test" or "all". "train" and "val" reproduce the
 * hold-out of a training run with the given seed (val_fraction 0.2). When
 * out_dir is non-NULL the report and a manifest are written there. */
F2C_API f2c_status f2c_evaluate(const f2c_model* model, const f2c_cache* cache, const char* split, uint64_t seed,
                                const char* out_dir, char** report, double* accuracy);

/* Verifies a report's structured records and returns its accuracy. */
F2C_API f2c_status f2c_report_parse(const char* text, double* accuracy);

#ifdef __cplusplus
}
#endif

#endif
