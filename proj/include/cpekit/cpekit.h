/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright 2026 The cpekit Authors */

/*
 * cpekit C API.
 *
 * Every function returns a cpek_status. On failure a description is kept in
 * thread-local storage and can be read with cpek_last_error() until the next
 * failing call on the same thread. Objects are opaque handles; release them
 * with the matching *_free function (NULL is accepted). Strings returned
 * through char** are owned by the caller and freed with cpek_string_free().
 */
#ifndef CPEKIT_CPEKIT_H
#define CPEKIT_CPEKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CPEKIT_BUILDING)
#    define CPEK_API __declspec(dllexport)
#  else
#    define CPEK_API __declspec(dllimport)
#  endif
#else
#  define CPEK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cpek_status {
  CPEK_OK = 0,
  CPEK_ERR_CONFIG = 1,           /* invalid configuration */
  CPEK_ERR_RUNTIME = 2,          /* numerical or internal failure */
  CPEK_ERR_INVALID_ARGUMENT = 3, /* NULL handle, bad size, out-of-range value */
  CPEK_ERR_IO = 4,
  CPEK_ERR_BUFFER_TOO_SMALL = 5
} cpek_status;

typedef enum cpek_algorithm {
  CPEK_BPS = 0,
  CPEK_CPN = 1,
  CPEK_MAP_BP = 2,
  CPEK_BPS_OPT = 3
} cpek_algorithm;

typedef struct cpek_constellation cpek_constellation;
typedef struct cpek_trace cpek_trace;
typedef struct cpek_params cpek_params;

CPEK_API const char* cpek_version(void);
CPEK_API const char* cpek_last_error(void);
CPEK_API void cpek_string_free(char* s);
/* CPEKIT_WORKERS if set, else the hardware thread count. */
CPEK_API size_t cpek_default_workers(void);

/* ---- constellation ---- */

CPEK_API cpek_status cpek_constellation_qam(int order, cpek_constellation** out);
CPEK_API cpek_status cpek_constellation_shaped(int order, double lambda, cpek_constellation** out);
/* lambda_out may be NULL. */
CPEK_API cpek_status cpek_constellation_for_entropy(int order, double entropy_bits,
                                                    cpek_constellation** out, double* lambda_out);
CPEK_API void cpek_constellation_free(cpek_constellation* c);
CPEK_API size_t cpek_constellation_size(const cpek_constellation* c);
CPEK_API int cpek_constellation_bits(const cpek_constellation* c);
CPEK_API double cpek_constellation_entropy(const cpek_constellation* c);
/* Any output pointer may be NULL; the others need capacity >= size. */
CPEK_API cpek_status cpek_constellation_points(const cpek_constellation* c, double* re,
                                               double* im, double* probs, uint32_t* labels,
                                               size_t capacity);

/* ---- channel ---- */

typedef struct cpek_channel_params {
  double snr_db;          /* +INFINITY disables the noise */
  double sigma_theta_sq;
  size_t num_symbols;
  uint64_t seed;
  double phi0;
  int uniform_initial_phase; /* nonzero: phi0 drawn uniformly in [-pi/n, pi/n) */
} cpek_channel_params;

CPEK_API void cpek_channel_params_default(cpek_channel_params* p);
CPEK_API cpek_status cpek_transmit(const cpek_constellation* c, const cpek_channel_params* p,
                                   cpek_trace** out);
CPEK_API void cpek_trace_free(cpek_trace* t);
CPEK_API size_t cpek_trace_size(const cpek_trace* t);
CPEK_API double cpek_trace_noise_var(const cpek_trace* t);
CPEK_API cpek_status cpek_trace_rx(const cpek_trace* t, double* re, double* im, size_t capacity);
CPEK_API cpek_status cpek_trace_tx(const cpek_trace* t, double* re, double* im, size_t capacity);
CPEK_API cpek_status cpek_trace_phase(const cpek_trace* t, double* phi, size_t capacity);
/* size * bits_per_symbol entries, row-major, MSB first. */
CPEK_API cpek_status cpek_trace_bits(const cpek_trace* t, uint8_t* bits, size_t capacity);

/* ---- weighted BPS parameters ---- */

CPEK_API cpek_status cpek_params_uniform(int half_window, double temperature, cpek_params** out);
/* count must be odd (2N+1); weights must be positive. */
CPEK_API cpek_status cpek_params_from_weights(const double* weights, size_t count,
                                              double temperature, cpek_params** out);
CPEK_API cpek_status cpek_params_load(const char* path, cpek_params** out);
CPEK_API void cpek_params_free(cpek_params* p);
CPEK_API int cpek_params_half_window(const cpek_params* p);
CPEK_API cpek_status cpek_params_weights(const cpek_params* p, double* weights, size_t capacity,
                                         double* temperature);

/* ---- estimation ---- */

typedef struct cpek_estimator_config {
  int half_window;
  int m_count;
  int wrap_terms;
  int full_sequence_bp;
  double sigma_theta_sq;
  double channel_noise_var; /* total complex AWGN variance of the channel */
} cpek_estimator_config;

CPEK_API void cpek_estimator_config_default(cpek_estimator_config* cfg);
CPEK_API cpek_status cpek_algorithm_parse(const char* name, cpek_algorithm* out);

/* phi_out receives count raw estimates in [-pi/n, pi/n). params is only used
 * (and may be NULL otherwise) for CPEK_BPS_OPT. */
CPEK_API cpek_status cpek_estimate(cpek_algorithm algorithm, const double* y_re,
                                   const double* y_im, size_t count,
                                   const cpek_estimator_config* cfg, const cpek_constellation* c,
                                   const cpek_params* params, double* phi_out);

/* Unwrap, data-aided cycle-slip correction and derotation. Output arrays hold
 * count entries; slip_events may be NULL. */
CPEK_API cpek_status cpek_correct_phase(const double* y_re, const double* y_im, size_t count,
                                        const double* phi_raw, const double* phi_true,
                                        int sym_order, double* phi_corrected, double* x_re,
                                        double* x_im, size_t* slip_events);

/* ---- scoring ---- */

typedef struct cpek_bmi_report {
  double bmi_bits;
  double raw_bmi_bits;
  double entropy_bits;
  double demapper_sigma_sq;
  size_t num_symbols_scored;
  int negative_clamped;
  int degenerate;
} cpek_bmi_report;

/* demapper_sigma_sq <= 0 selects the variance that maximizes the BMI. */
CPEK_API cpek_status cpek_evaluate(const double* x_re, const double* x_im, size_t count,
                                   const uint8_t* bits, const cpek_constellation* c,
                                   double demapper_sigma_sq, cpek_bmi_report* out);

/* ---- experiments (JSON configuration) ---- */

/* workers == 0 uses cpek_default_workers(). result_json may be NULL. */
CPEK_API cpek_status cpek_sweep_run(const char* config_json, size_t workers, char** result_json);
CPEK_API cpek_status cpek_eval_run(const char* config_json, size_t workers, char** result_json);
CPEK_API cpek_status cpek_train_run(const char* config_json, size_t workers, char** result_json);
/* params_path may be NULL. files_json receives the list of files written. */
CPEK_API cpek_status cpek_plot_data(const char* results_csv, const char* params_path,
                                    const char* prefix, char** files_json);
CPEK_API cpek_status cpek_config_hash(const char* config_json, char* out, size_t capacity);

#ifdef __cplusplus
}
#endif

#endif /* CPEKIT_CPEKIT_H */
