#ifndef DUALCTL_DUALCTL_H_
#define DUALCTL_DUALCTL_H_

/* C interface to the dualctl library. Every object is an opaque handle
 * owned by the caller and released with its *_free function. Functions
 * returning dualctl_status leave a description of the last failure in
 * thread-local storage, readable with dualctl_last_error(). */

#include <stddef.h>

#if defined(_WIN32)
#define DUALCTL_API __declspec(dllexport)
#else
#define DUALCTL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dualctl_status {
  DUALCTL_OK = 0,
  DUALCTL_ERROR_INTERNAL = 1,
  DUALCTL_ERROR_VALIDATION = 2,      /* malformed input; see dualctl_last_error_field() */
  DUALCTL_ERROR_UNDERDETERMINED = 3, /* regressors are rank deficient */
  DUALCTL_ERROR_INFEASIBLE = 4,      /* no feasible controller, or every episode failed */
  DUALCTL_ERROR_INSTABILITY = 5,
  DUALCTL_ERROR_INVALID_RESPONSE = 6,
  DUALCTL_ERROR_CONTRACT = 7, /* bad arguments, including null handles */
  DUALCTL_ERROR_IO = 8
} dualctl_status;

typedef enum dualctl_synth_mode {
  DUALCTL_SYNTH_NOMINAL = 0,
  DUALCTL_SYNTH_ROBUST = 1,
  DUALCTL_SYNTH_DUAL = 2
} dualctl_synth_mode;

typedef struct dualctl_config dualctl_config;
typedef struct dualctl_dataset dualctl_dataset;
typedef struct dualctl_model dualctl_model;
typedef struct dualctl_synthesis dualctl_synthesis;
typedef struct dualctl_experiment dualctl_experiment;

DUALCTL_API const char* dualctl_version(void);
DUALCTL_API const char* dualctl_status_name(dualctl_status status);
DUALCTL_API const char* dualctl_last_error(void);
/* Offending configuration key of the last validation error, or "". */
DUALCTL_API const char* dualctl_last_error_field(void);

/* Configuration documents: `key = value` lines. */
DUALCTL_API dualctl_status dualctl_config_load(const char* path, dualctl_config** out);
DUALCTL_API dualctl_status dualctl_config_parse(const char* text, dualctl_config** out);
/* Sets or replaces a key; `value` uses the document syntax. */
DUALCTL_API dualctl_status dualctl_config_set(dualctl_config* config, const char* key, const char* value);
DUALCTL_API dualctl_status dualctl_config_save(const dualctl_config* config, const char* path);
/* Checks every experiment field. */
DUALCTL_API dualctl_status dualctl_config_validate(const dualctl_config* config);
DUALCTL_API void dualctl_config_free(dualctl_config* config);

/* Open-loop white-noise rollouts of the configured plant from the
 * configured seed. */
DUALCTL_API dualctl_status dualctl_generate_data(const dualctl_config* config, dualctl_dataset** out);
DUALCTL_API dualctl_status dualctl_dataset_load_csv(const char* path, dualctl_dataset** out);
/* The file named by the `data` key, relative to the configuration file. */
DUALCTL_API dualctl_status dualctl_dataset_from_config(const dualctl_config* config, dualctl_dataset** out);
DUALCTL_API dualctl_status dualctl_dataset_save_csv(const dualctl_dataset* data, const char* path);
DUALCTL_API int dualctl_dataset_num_pairs(const dualctl_dataset* data);
DUALCTL_API void dualctl_dataset_free(dualctl_dataset* data);

/* Least squares plus credibility region, using sigma_w, delta and
 * chi_square from the configuration. */
DUALCTL_API dualctl_status dualctl_identify(const dualctl_config* config, const dualctl_dataset* data,
                                            dualctl_model** out);
DUALCTL_API dualctl_status dualctl_model_load(const char* path, dualctl_model** out);
/* The model named by the `model` key, or the inline A_hat/B_hat/D keys. */
DUALCTL_API dualctl_status dualctl_model_from_config(const dualctl_config* config, dualctl_model** out);
DUALCTL_API dualctl_status dualctl_model_save(const dualctl_model* model, const char* path);
DUALCTL_API dualctl_status dualctl_model_dims(const dualctl_model* model, int* n_x, int* n_u);
/* Copies the n_x*n_x, n_x*n_u and (n_x+n_u)^2 row-major matrices into the
 * buffers that are not null. */
DUALCTL_API dualctl_status dualctl_model_matrices(const dualctl_model* model, double* A_hat, double* B_hat,
                                                  double* D);
DUALCTL_API void dualctl_model_free(dualctl_model* model);

DUALCTL_API dualctl_status dualctl_synthesize(const dualctl_config* config, const dualctl_model* model,
                                              dualctl_synth_mode mode, dualctl_synthesis** out);
/* Per-step H2 cost; for dual plans the planned total T_e J1 + (T - T_e) J2. */
DUALCTL_API double dualctl_synthesis_objective(const dualctl_synthesis* synthesis);
/* Multiplier of the robust certificate (lambda2 for dual plans), or -1. */
DUALCTL_API double dualctl_synthesis_lambda(const dualctl_synthesis* synthesis);
DUALCTL_API dualctl_status dualctl_synthesis_save(const dualctl_synthesis* synthesis, const char* path);
DUALCTL_API void dualctl_synthesis_free(dualctl_synthesis* synthesis);

/* Runs the paired Monte Carlo comparison of the nominal, dual and greedy
 * strategies. */
DUALCTL_API dualctl_status dualctl_experiment_run(const dualctl_config* config, dualctl_experiment** out);
/* Writes results.csv, aggregate.csv, plot_data.csv and manifest.txt into
 * `out_dir` (created if needed). */
DUALCTL_API dualctl_status dualctl_experiment_write(const dualctl_experiment* experiment, const char* out_dir);
/* strategy: nominal | dual | greedy; phase: explore | exploit | total. */
DUALCTL_API dualctl_status dualctl_experiment_aggregate(const dualctl_experiment* experiment, const char* strategy,
                                                        const char* phase, double* mean, double* median, int* n,
                                                        int* failures);
DUALCTL_API size_t dualctl_experiment_num_warnings(const dualctl_experiment* experiment);
DUALCTL_API const char* dualctl_experiment_warning(const dualctl_experiment* experiment, size_t index);
DUALCTL_API void dualctl_experiment_free(dualctl_experiment* experiment);

#ifdef __cplusplus
}
#endif

#endif /* DUALCTL_DUALCTL_H_ */
