// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include "cpekit/cpekit.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "channel.hpp"
#include "constellation.hpp"
#include "estimators.hpp"
#include "experiment.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "postproc.hpp"
#include "training.hpp"

struct cpek_constellation {
  cpekit::Constellation value;
};
struct cpek_trace {
  cpekit::ChannelTrace value;
};
struct cpek_params {
  cpekit::BpsOptParams value;
};

namespace {

thread_local std::string g_last_error;

cpek_status fail(cpek_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

// Maps exceptions from the core onto status codes.
template <typename Fn>
cpek_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const cpekit::ConfigError& e) {
    return fail(CPEK_ERR_CONFIG, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(CPEK_ERR_CONFIG, std::string("JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    return fail(CPEK_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(CPEK_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(CPEK_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(CPEK_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(CPEK_ERR_RUNTIME, "unknown error");
  }
}

#define CPEK_REQUIRE(cond, what)                                 \
  do {                                                           \
    if (!(cond)) return fail(CPEK_ERR_INVALID_ARGUMENT, (what)); \
  } while (0)

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::size_t resolve_workers(std::size_t w) { return w == 0 ? cpekit::default_workers() : w; }

cpekit::ExperimentConfig parse_config(const char* text) {
  return cpekit::ExperimentConfig::from_json(nlohmann::json::parse(text));
}

std::vector<cpekit::cplx> to_complex(const double* re, const double* im, std::size_t n) {
  std::vector<cpekit::cplx> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {re[i], im[i]};
  return out;
}

cpek_status wrap_constellation(cpekit::Constellation c, cpek_constellation** out) {
  *out = new cpek_constellation{std::move(c)};
  return CPEK_OK;
}

}  // namespace

extern "C" {

const char* cpek_version(void) { return "0.1.0"; }

const char* cpek_last_error(void) { return g_last_error.c_str(); }

void cpek_string_free(char* s) { std::free(s); }

size_t cpek_default_workers(void) { return cpekit::default_workers(); }

cpek_status cpek_constellation_qam(int order, cpek_constellation** out) {
  CPEK_REQUIRE(out != nullptr, "out is NULL");
  return guarded([&] { return wrap_constellation(cpekit::Constellation::qam(order), out); });
}

cpek_status cpek_constellation_shaped(int order, double lambda, cpek_constellation** out) {
  CPEK_REQUIRE(out != nullptr, "out is NULL");
  return guarded([&] {
    return wrap_constellation(
        cpekit::maxwell_boltzmann_shape(cpekit::Constellation::qam(order), lambda), out);
  });
}

cpek_status cpek_constellation_for_entropy(int order, double entropy_bits, cpek_constellation** out,
                                           double* lambda_out) {
  CPEK_REQUIRE(out != nullptr, "out is NULL");
  return guarded([&] {
    auto shaped = cpekit::shape_for_entropy(cpekit::Constellation::qam(order), entropy_bits);
    if (lambda_out != nullptr) *lambda_out = shaped.lambda;
    return wrap_constellation(std::move(shaped.constellation), out);
  });
}

void cpek_constellation_free(cpek_constellation* c) { delete c; }

size_t cpek_constellation_size(const cpek_constellation* c) {
  return c == nullptr ? 0 : c->value.size();
}

int cpek_constellation_bits(const cpek_constellation* c) {
  return c == nullptr ? 0 : c->value.bits_per_symbol();
}

double cpek_constellation_entropy(const cpek_constellation* c) {
  return c == nullptr ? 0.0 : cpekit::entropy(c->value);
}

cpek_status cpek_constellation_points(const cpek_constellation* c, double* re, double* im,
                                      double* probs, uint32_t* labels, size_t capacity) {
  CPEK_REQUIRE(c != nullptr, "constellation is NULL");
  const auto& v = c->value;
  if (capacity < v.size()) return fail(CPEK_ERR_BUFFER_TOO_SMALL, "capacity below constellation size");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (re != nullptr) re[i] = v.points()[i].real();
    if (im != nullptr) im[i] = v.points()[i].imag();
    if (probs != nullptr) probs[i] = v.probs()[i];
    if (labels != nullptr) labels[i] = v.labels()[i];
  }
  return CPEK_OK;
}

void cpek_channel_params_default(cpek_channel_params* p) {
  if (p == nullptr) return;
  const cpekit::ChannelParams d;
  p->snr_db = d.snr_db;
  p->sigma_theta_sq = d.sigma_theta_sq;
  p->num_symbols = d.num_symbols;
  p->seed = d.seed;
  p->phi0 = d.phi0;
  p->uniform_initial_phase = d.initial_phase == cpekit::InitialPhase::uniform;
}

cpek_status cpek_transmit(const cpek_constellation* c, const cpek_channel_params* p,
                          cpek_trace** out) {
  CPEK_REQUIRE(c != nullptr && p != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    cpekit::ChannelParams cp;
    cp.snr_db = p->snr_db;
    cp.sigma_theta_sq = p->sigma_theta_sq;
    cp.num_symbols = p->num_symbols;
    cp.seed = p->seed;
    cp.phi0 = p->phi0;
    cp.initial_phase =
        p->uniform_initial_phase ? cpekit::InitialPhase::uniform : cpekit::InitialPhase::fixed;
    *out = new cpek_trace{cpekit::transmit(c->value, cp)};
    return CPEK_OK;
  });
}

void cpek_trace_free(cpek_trace* t) { delete t; }

size_t cpek_trace_size(const cpek_trace* t) { return t == nullptr ? 0 : t->value.size(); }

double cpek_trace_noise_var(const cpek_trace* t) { return t == nullptr ? 0.0 : t->value.sigma_n_sq; }

static cpek_status copy_complex(const std::vector<cpekit::cplx>& v, double* re, double* im,
                                size_t capacity) {
  if (capacity < v.size()) return fail(CPEK_ERR_BUFFER_TOO_SMALL, "capacity below trace size");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (re != nullptr) re[i] = v[i].real();
    if (im != nullptr) im[i] = v[i].imag();
  }
  return CPEK_OK;
}

cpek_status cpek_trace_rx(const cpek_trace* t, double* re, double* im, size_t capacity) {
  CPEK_REQUIRE(t != nullptr, "trace is NULL");
  return copy_complex(t->value.rx_symbols, re, im, capacity);
}

cpek_status cpek_trace_tx(const cpek_trace* t, double* re, double* im, size_t capacity) {
  CPEK_REQUIRE(t != nullptr, "trace is NULL");
  return copy_complex(t->value.tx_symbols, re, im, capacity);
}

cpek_status cpek_trace_phase(const cpek_trace* t, double* phi, size_t capacity) {
  CPEK_REQUIRE(t != nullptr && phi != nullptr, "NULL argument");
  const auto& v = t->value.phase_path;
  if (capacity < v.size()) return fail(CPEK_ERR_BUFFER_TOO_SMALL, "capacity below trace size");
  std::copy(v.begin(), v.end(), phi);
  return CPEK_OK;
}

cpek_status cpek_trace_bits(const cpek_trace* t, uint8_t* bits, size_t capacity) {
  CPEK_REQUIRE(t != nullptr && bits != nullptr, "NULL argument");
  const auto& v = t->value.bits;
  if (capacity < v.size()) return fail(CPEK_ERR_BUFFER_TOO_SMALL, "capacity below bit count");
  std::copy(v.begin(), v.end(), bits);
  return CPEK_OK;
}

cpek_status cpek_params_uniform(int half_window, double temperature, cpek_params** out) {
  CPEK_REQUIRE(out != nullptr, "out is NULL");
  return guarded([&] {
    *out = new cpek_params{cpekit::BpsOptParams::uniform(half_window, temperature)};
    return CPEK_OK;
  });
}

cpek_status cpek_params_from_weights(const double* weights, size_t count, double temperature,
                                     cpek_params** out) {
  CPEK_REQUIRE(out != nullptr && weights != nullptr, "NULL argument");
  return guarded([&] {
    *out = new cpek_params{
        cpekit::BpsOptParams::from_weights(std::span<const double>(weights, count), temperature)};
    return CPEK_OK;
  });
}

cpek_status cpek_params_load(const char* path, cpek_params** out) {
  CPEK_REQUIRE(out != nullptr && path != nullptr, "NULL argument");
  return guarded([&] {
    std::ifstream in(path);
    if (!in) return fail(CPEK_ERR_IO, std::string("cannot open '") + path + "'");
    *out = new cpek_params{cpekit::params_from_json(nlohmann::json::parse(in))};
    return CPEK_OK;
  });
}

void cpek_params_free(cpek_params* p) { delete p; }

int cpek_params_half_window(const cpek_params* p) {
  return p == nullptr ? -1 : p->value.half_window();
}

cpek_status cpek_params_weights(const cpek_params* p, double* weights, size_t capacity,
                                double* temperature) {
  CPEK_REQUIRE(p != nullptr, "params is NULL");
  const auto w = p->value.weights();
  if (weights != nullptr) {
    if (capacity < w.size()) return fail(CPEK_ERR_BUFFER_TOO_SMALL, "capacity below 2N+1");
    std::copy(w.begin(), w.end(), weights);
  }
  if (temperature != nullptr) *temperature = p->value.temperature();
  return CPEK_OK;
}

void cpek_estimator_config_default(cpek_estimator_config* cfg) {
  if (cfg == nullptr) return;
  cfg->half_window = 32;
  cfg->m_count = 60;
  cfg->wrap_terms = 3;
  cfg->full_sequence_bp = 0;
  cfg->sigma_theta_sq = 0.0;
  cfg->channel_noise_var = 0.01;
}

cpek_status cpek_algorithm_parse(const char* name, cpek_algorithm* out) {
  CPEK_REQUIRE(name != nullptr && out != nullptr, "NULL argument");
  const auto a = cpekit::parse_algorithm(name);
  if (!a) return fail(CPEK_ERR_CONFIG, std::string("unknown algorithm '") + name + "'");
  *out = static_cast<cpek_algorithm>(*a);
  return CPEK_OK;
}

cpek_status cpek_estimate(cpek_algorithm algorithm, const double* y_re, const double* y_im,
                          size_t count, const cpek_estimator_config* cfg,
                          const cpek_constellation* c, const cpek_params* params,
                          double* phi_out) {
  CPEK_REQUIRE(y_re != nullptr && y_im != nullptr && cfg != nullptr && c != nullptr &&
                   phi_out != nullptr,
               "NULL argument");
  CPEK_REQUIRE(algorithm >= CPEK_BPS && algorithm <= CPEK_BPS_OPT, "unknown algorithm");
  CPEK_REQUIRE(algorithm != CPEK_BPS_OPT || params != nullptr, "bps_opt needs params");
  return guarded([&] {
    const auto y = to_complex(y_re, y_im, count);
    auto ecfg = cpekit::EstimatorConfig::for_channel(
        cfg->half_window, cpekit::make_grid(cfg->m_count, c->value.sym_order()),
        cfg->channel_noise_var, cfg->sigma_theta_sq);
    ecfg.wrap_terms = cfg->wrap_terms;
    ecfg.full_sequence_bp = cfg->full_sequence_bp != 0;
    const auto phi = cpekit::estimate(static_cast<cpekit::Algorithm>(algorithm), y, ecfg, c->value,
                                      params != nullptr ? &params->value : nullptr);
    std::copy(phi.begin(), phi.end(), phi_out);
    return CPEK_OK;
  });
}

cpek_status cpek_correct_phase(const double* y_re, const double* y_im, size_t count,
                               const double* phi_raw, const double* phi_true, int sym_order,
                               double* phi_corrected, double* x_re, double* x_im,
                               size_t* slip_events) {
  CPEK_REQUIRE(y_re != nullptr && y_im != nullptr && phi_raw != nullptr && phi_true != nullptr,
               "NULL argument");
  return guarded([&] {
    const auto y = to_complex(y_re, y_im, count);
    const auto r = cpekit::correct_phase(y, std::span<const double>(phi_raw, count),
                                         std::span<const double>(phi_true, count), sym_order);
    for (std::size_t k = 0; k < count; ++k) {
      if (phi_corrected != nullptr) phi_corrected[k] = r.phi_hat_corrected[k];
      if (x_re != nullptr) x_re[k] = r.x_hat[k].real();
      if (x_im != nullptr) x_im[k] = r.x_hat[k].imag();
    }
    if (slip_events != nullptr) *slip_events = r.slip_events.size();
    return CPEK_OK;
  });
}

cpek_status cpek_evaluate(const double* x_re, const double* x_im, size_t count, const uint8_t* bits,
                          const cpek_constellation* c, double demapper_sigma_sq,
                          cpek_bmi_report* out) {
  CPEK_REQUIRE(x_re != nullptr && x_im != nullptr && bits != nullptr && c != nullptr &&
                   out != nullptr,
               "NULL argument");
  return guarded([&] {
    const auto x = to_complex(x_re, x_im, count);
    const std::span<const std::uint8_t> b(bits, count * c->value.bits_per_symbol());
    const auto rep = demapper_sigma_sq > 0.0
                         ? cpekit::bmi_report(x, b, c->value, demapper_sigma_sq)
                         : cpekit::optimize_demapper_variance(x, b, c->value);
    out->bmi_bits = rep.bmi_bits;
    out->raw_bmi_bits = rep.raw_bmi_bits;
    out->entropy_bits = rep.entropy_bits;
    out->demapper_sigma_sq = rep.demapper_sigma_sq;
    out->num_symbols_scored = rep.num_symbols_scored;
    out->negative_clamped = rep.negative_clamped;
    out->degenerate = rep.degenerate;
    return CPEK_OK;
  });
}

cpek_status cpek_sweep_run(const char* config_json, size_t workers, char** result_json) {
  CPEK_REQUIRE(config_json != nullptr, "config is NULL");
  return guarded([&] {
    const auto cfg = parse_config(config_json);
    const auto outcome = cpekit::run_sweep(cfg, resolve_workers(workers));
    if (result_json != nullptr) {
      nlohmann::json doc = {{"config_hash", cfg.hash()},
                            {"computed_cells", outcome.computed_cells},
                            {"reused_cells", outcome.reused_cells},
                            {"output", cfg.output},
                            {"cells", cpekit::cells_to_json(outcome.cells)}};
      *result_json = dup_string(doc.dump());
    }
    return CPEK_OK;
  });
}

cpek_status cpek_eval_run(const char* config_json, size_t workers, char** result_json) {
  CPEK_REQUIRE(config_json != nullptr, "config is NULL");
  return guarded([&] {
    const auto cfg = parse_config(config_json);
    const auto cells = cpekit::evaluate_cells(cfg, resolve_workers(workers));
    if (result_json != nullptr) {
      nlohmann::json doc = {{"config_hash", cfg.hash()}, {"cells", cpekit::cells_to_json(cells)}};
      *result_json = dup_string(doc.dump());
    }
    return CPEK_OK;
  });
}

cpek_status cpek_train_run(const char* config_json, size_t workers, char** result_json) {
  CPEK_REQUIRE(config_json != nullptr, "config is NULL");
  return guarded([&] {
    const auto cfg = parse_config(config_json);
    std::vector<cpekit::CellResult> held_out;
    const auto report = cpekit::run_train(cfg, resolve_workers(workers), &held_out);
    if (result_json != nullptr) {
      auto doc = report.to_json();
      if (!held_out.empty()) doc["held_out"] = cpekit::cells_to_json(held_out);
      *result_json = dup_string(doc.dump());
    }
    return CPEK_OK;
  });
}

cpek_status cpek_plot_data(const char* results_csv, const char* params_path, const char* prefix,
                           char** files_json) {
  CPEK_REQUIRE(results_csv != nullptr && prefix != nullptr, "NULL argument");
  return guarded([&] {
    const auto rows = cpekit::read_summary_csv(results_csv);
    std::optional<cpekit::BpsOptParams> params;
    if (params_path != nullptr) {
      std::ifstream in(params_path);
      if (!in) return fail(CPEK_ERR_IO, std::string("cannot open '") + params_path + "'");
      params = cpekit::params_from_json(nlohmann::json::parse(in));
    }
    const auto files = cpekit::emit_plot_data(rows, params ? &*params : nullptr, prefix);
    if (files_json != nullptr) *files_json = dup_string(nlohmann::json(files).dump());
    return CPEK_OK;
  });
}

cpek_status cpek_config_hash(const char* config_json, char* out, size_t capacity) {
  CPEK_REQUIRE(config_json != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    const auto h = parse_config(config_json).hash();
    if (capacity < h.size() + 1) return fail(CPEK_ERR_BUFFER_TOO_SMALL, "need 17 bytes");
    std::memcpy(out, h.c_str(), h.size() + 1);
    return CPEK_OK;
  });
}

}  // extern "C"
