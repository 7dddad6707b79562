// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include <cpekit/cpekit.h>

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int failures = 0;

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: CHECK(%s) failed\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static void test_constellation(void) {
  cpek_constellation* c = NULL;
  CHECK(cpek_constellation_qam(64, &c) == CPEK_OK);
  CHECK(cpek_constellation_size(c) == 64);
  CHECK(cpek_constellation_bits(c) == 6);
  CHECK(fabs(cpek_constellation_entropy(c) - 6.0) < 1e-12);

  double re[64], im[64], p[64];
  uint32_t labels[64];
  CHECK(cpek_constellation_points(c, re, im, p, labels, 64) == CPEK_OK);
  double energy = 0.0, total = 0.0;
  for (int i = 0; i < 64; ++i) {
    energy += p[i] * (re[i] * re[i] + im[i] * im[i]);
    total += p[i];
  }
  CHECK(fabs(energy - 1.0) < 1e-12);
  CHECK(fabs(total - 1.0) < 1e-12);
  CHECK(cpek_constellation_points(c, re, im, NULL, NULL, 10) == CPEK_ERR_BUFFER_TOO_SMALL);
  CHECK(strlen(cpek_last_error()) > 0);
  cpek_constellation_free(c);

  double lambda = -1.0;
  CHECK(cpek_constellation_for_entropy(64, 5.5, &c, &lambda) == CPEK_OK);
  CHECK(lambda > 0.0);
  CHECK(fabs(cpek_constellation_entropy(c) - 5.5) < 1e-6);
  cpek_constellation_free(c);

  c = NULL;
  CHECK(cpek_constellation_qam(12, &c) == CPEK_ERR_INVALID_ARGUMENT);
  CHECK(c == NULL);
  CHECK(cpek_constellation_shaped(16, -1.0, &c) == CPEK_ERR_INVALID_ARGUMENT);
  CHECK(cpek_constellation_qam(16, NULL) == CPEK_ERR_INVALID_ARGUMENT);
  cpek_constellation_free(NULL);
}

static void test_pipeline(void) {
  cpek_constellation* c = NULL;
  CHECK(cpek_constellation_for_entropy(16, 3.6, &c, NULL) == CPEK_OK);
  cpek_channel_params cp;
  cpek_channel_params_default(&cp);
  cp.snr_db = 18.0;
  cp.sigma_theta_sq = 1e-4;
  cp.num_symbols = 2048;
  cp.seed = 5;
  cpek_trace* t = NULL;
  CHECK(cpek_transmit(c, &cp, &t) == CPEK_OK);
  const size_t n = cpek_trace_size(t);
  CHECK(n == 2048);
  CHECK(fabs(cpek_trace_noise_var(t) - pow(10.0, -1.8)) < 1e-15);

  double* yr = malloc(n * sizeof(double));
  double* yi = malloc(n * sizeof(double));
  double* phi = malloc(n * sizeof(double));
  double* est = malloc(n * sizeof(double));
  double* corr = malloc(n * sizeof(double));
  double* xr = malloc(n * sizeof(double));
  double* xi = malloc(n * sizeof(double));
  uint8_t* bits = malloc(n * 4);
  CHECK(cpek_trace_rx(t, yr, yi, n) == CPEK_OK);
  CHECK(cpek_trace_phase(t, phi, n) == CPEK_OK);
  CHECK(cpek_trace_bits(t, bits, n * 4) == CPEK_OK);
  CHECK(cpek_trace_bits(t, bits, n) == CPEK_ERR_BUFFER_TOO_SMALL);
  CHECK(cpek_trace_rx(t, yr, yi, 3) == CPEK_ERR_BUFFER_TOO_SMALL);

  cpek_estimator_config cfg;
  cpek_estimator_config_default(&cfg);
  cfg.half_window = 8;
  cfg.m_count = 16;
  cfg.sigma_theta_sq = 1e-4;
  cfg.channel_noise_var = cpek_trace_noise_var(t);

  cpek_algorithm algs[4];
  const char* names[4] = {"bps", "cpn", "map_bp", "bps_opt"};
  for (int a = 0; a < 4; ++a) CHECK(cpek_algorithm_parse(names[a], &algs[a]) == CPEK_OK);
  CHECK(algs[2] == CPEK_MAP_BP);
  cpek_algorithm dummy;
  CHECK(cpek_algorithm_parse("viterbi", &dummy) == CPEK_ERR_CONFIG);

  cpek_params* params = NULL;
  CHECK(cpek_params_uniform(8, 1e-6, &params) == CPEK_OK);
  CHECK(cpek_params_half_window(params) == 8);

  for (int a = 0; a < 4; ++a) {
    CHECK(cpek_estimate(algs[a], yr, yi, n, &cfg, c, params, est) == CPEK_OK);
    for (size_t k = 0; k < n; ++k) CHECK(est[k] >= -M_PI / 4 && est[k] < M_PI / 4);
    size_t slips = 99;
    CHECK(cpek_correct_phase(yr, yi, n, est, phi, 4, corr, xr, xi, &slips) == CPEK_OK);
    CHECK(slips < 99);
    cpek_bmi_report rep;
    CHECK(cpek_evaluate(xr, xi, n, bits, c, 0.0, &rep) == CPEK_OK);
    CHECK(rep.bmi_bits > 3.0);
    CHECK(rep.bmi_bits <= rep.entropy_bits);
    CHECK(rep.num_symbols_scored == n);
    CHECK(rep.demapper_sigma_sq > 0.0);
  }
  CHECK(cpek_estimate(CPEK_BPS_OPT, yr, yi, n, &cfg, c, NULL, est) == CPEK_ERR_INVALID_ARGUMENT);
  cfg.half_window = 2000;
  CHECK(cpek_estimate(CPEK_BPS, yr, yi, n, &cfg, c, NULL, est) == CPEK_ERR_INVALID_ARGUMENT);

  double w[17], temp = 0.0;
  CHECK(cpek_params_weights(params, w, 17, &temp) == CPEK_OK);
  CHECK(fabs(w[0] - 1.0 / 17) < 1e-15);
  CHECK(fabs(temp - 1e-6) < 1e-18);
  CHECK(cpek_params_weights(params, w, 3, NULL) == CPEK_ERR_BUFFER_TOO_SMALL);
  cpek_params_free(params);
  const double raw[3] = {1.0, 2.0, 1.0};
  CHECK(cpek_params_from_weights(raw, 3, 0.1, &params) == CPEK_OK);
  CHECK(cpek_params_weights(params, w, 3, NULL) == CPEK_OK);
  CHECK(fabs(w[1] - 0.5) < 1e-12);
  cpek_params_free(params);
  CHECK(cpek_params_from_weights(raw, 2, 0.1, &params) == CPEK_ERR_INVALID_ARGUMENT);
  CHECK(cpek_params_load("does/not/exist.json", &params) == CPEK_ERR_IO);

  free(yr);
  free(yi);
  free(phi);
  free(est);
  free(corr);
  free(xr);
  free(xi);
  free(bits);
  cpek_trace_free(t);
  cpek_constellation_free(c);
}

static void test_experiments(void) {
  const char* cfg =
      "{\"constellation\":{\"order\":16},\"snr_db\":[16,20],\"sigma_theta_sq\":1e-4,"
      "\"algorithms\":[\"bps\",\"map_bp\"],\"N\":4,\"M\":8,\"realizations\":2,"
      "\"symbols\":256,\"output\":\"capi_sweep.csv\"}";
  remove("capi_sweep.csv");
  remove("capi_sweep.realizations.csv");
  char* result = NULL;
  CHECK(cpek_sweep_run(cfg, 1, &result) == CPEK_OK);
  CHECK(result != NULL && strstr(result, "\"computed_cells\":4") != NULL);
  cpek_string_free(result);
  CHECK(cpek_sweep_run(cfg, 0, &result) == CPEK_OK);
  CHECK(result != NULL && strstr(result, "\"reused_cells\":4") != NULL);
  cpek_string_free(result);

  CHECK(cpek_eval_run(cfg, 1, &result) == CPEK_OK);
  CHECK(result != NULL && strstr(result, "bmi_median") != NULL);
  cpek_string_free(result);

  char hash[17];
  CHECK(cpek_config_hash(cfg, hash, sizeof hash) == CPEK_OK);
  CHECK(strlen(hash) == 16);
  CHECK(cpek_config_hash(cfg, hash, 8) == CPEK_ERR_BUFFER_TOO_SMALL);

  CHECK(cpek_plot_data("capi_sweep.csv", NULL, "capi_", &result) == CPEK_OK);
  CHECK(result != NULL && strstr(result, "capi_bmi_vs_snr_sigma_") != NULL);
  cpek_string_free(result);

  CHECK(cpek_sweep_run("{\"snr_db\":[16],\"bogus\":1}", 1, NULL) == CPEK_ERR_CONFIG);
  CHECK(strstr(cpek_last_error(), "bogus") != NULL);
  CHECK(cpek_sweep_run("not json", 1, NULL) == CPEK_ERR_CONFIG);
  CHECK(cpek_train_run("{\"snr_db\":[16,18],\"sigma_theta_sq\":1e-4}", 1, NULL) == CPEK_ERR_CONFIG);
  CHECK(cpek_sweep_run(NULL, 1, NULL) == CPEK_ERR_INVALID_ARGUMENT);
}

int main(void) {
  CHECK(strlen(cpek_version()) > 0);
  CHECK(cpek_default_workers() >= 1);
  test_constellation();
  test_pipeline();
  test_experiments();
  if (failures != 0) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("all C API checks passed\n");
  return 0;
}
