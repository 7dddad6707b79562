// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

// Command-line front end over the cpekit C API.
//
//   cpekit sweep     --config exp.json [overrides]
//   cpekit train     --config exp.json [overrides]
//   cpekit eval      --config exp.json [overrides]
//   cpekit plot-data --results results.csv [--params weights.json] [--prefix out/]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpekit/cpekit.h"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Overrides {
  std::string config_path;
  std::optional<int> order;
  std::optional<double> lambda;
  std::optional<double> entropy;
  std::vector<double> snr;
  std::vector<double> sigma_theta_sq;
  std::vector<std::string> algorithms;
  std::optional<int> half_window;
  std::optional<int> m_count;
  std::optional<int> wrap_terms;
  bool full_sequence_bp = false;
  std::optional<int> realizations;
  std::optional<std::size_t> symbols;
  std::optional<std::uint64_t> seed;
  bool exclude_edges = false;
  std::optional<std::string> initial_phase;
  std::optional<double> phi0;
  std::optional<std::string> demapper;
  std::optional<std::string> bps_opt_params;
  std::optional<double> bps_opt_temperature;
  std::optional<std::string> output;
  std::size_t workers = 0;
  // training
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batches_start;
  std::optional<int> batches_end;
  std::optional<std::size_t> batch_symbols_start;
  std::optional<std::size_t> batch_symbols_end;
  std::optional<std::uint64_t> train_seed;
  std::optional<double> init_temperature;
  std::optional<std::string> loss;
  std::optional<std::size_t> validation_symbols;
  std::optional<int> eval_realizations;
  std::optional<std::uint64_t> eval_seed;
};

void add_experiment_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_path, "Experiment config (JSON)");
  cmd->add_option("--order", o.order, "QAM order (4, 16, 64, 256)");
  cmd->add_option("--lambda", o.lambda, "Maxwell-Boltzmann shaping parameter");
  cmd->add_option("--entropy", o.entropy, "Target constellation entropy in bits");
  cmd->add_option("--snr", o.snr, "SNR values in dB")->delimiter(',');
  cmd->add_option("--sigma-theta-sq", o.sigma_theta_sq, "Phase-noise increment variances")
      ->delimiter(',');
  cmd->add_option("--algorithms", o.algorithms, "bps, cpn, map_bp, bps_opt")->delimiter(',');
  cmd->add_option("-N,--half-window", o.half_window, "Window half-length N");
  cmd->add_option("-M,--grid", o.m_count, "Phase grid size M");
  cmd->add_option("--wrap-terms", o.wrap_terms, "Wrapped-normal terms r_max");
  cmd->add_flag("--full-sequence-bp", o.full_sequence_bp, "Forward-backward over the whole frame");
  cmd->add_option("--realizations", o.realizations, "Realizations per cell");
  cmd->add_option("--symbols", o.symbols, "Symbols per realization");
  cmd->add_option("--seed", o.seed, "Base seed");
  cmd->add_flag("--exclude-edges", o.exclude_edges, "Score only symbols with a full window");
  cmd->add_option("--initial-phase", o.initial_phase, "fixed or uniform");
  cmd->add_option("--phi0", o.phi0, "Initial phase for --initial-phase fixed");
  cmd->add_option("--demapper", o.demapper, "per_realization or per_cell");
  cmd->add_option("--bps-opt-params", o.bps_opt_params, "Trained weights JSON for bps_opt");
  cmd->add_option("--bps-opt-temperature", o.bps_opt_temperature,
                  "Softmin temperature of untrained bps_opt");
  cmd->add_option("-o,--output", o.output, "Output path");
  cmd->add_option("-j,--workers", o.workers, "Worker threads (default: CPEKIT_WORKERS or cores)");
}

void add_training_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--lr", o.lr);
  cmd->add_option("--batches-start", o.batches_start);
  cmd->add_option("--batches-end", o.batches_end);
  cmd->add_option("--batch-symbols-start", o.batch_symbols_start);
  cmd->add_option("--batch-symbols-end", o.batch_symbols_end);
  cmd->add_option("--train-seed", o.train_seed);
  cmd->add_option("--init-temperature", o.init_temperature);
  cmd->add_option("--loss", o.loss, "bit_cross_entropy or phase_mse");
  cmd->add_option("--validation-symbols", o.validation_symbols);
  cmd->add_option("--eval-realizations", o.eval_realizations, "Held-out realizations after training");
  cmd->add_option("--eval-seed", o.eval_seed);
}

template <typename T>
void set_if(json& doc, const char* key, const std::optional<T>& v) {
  if (v) doc[key] = *v;
}

json build_config(const Overrides& o) {
  json doc = json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw std::runtime_error("cannot read config '" + o.config_path + "'");
    doc = json::parse(in);
  }
  if (o.order || o.lambda || o.entropy) {
    json& cs = doc["constellation"];
    if (!cs.is_object()) cs = json::object();
    if (o.order) cs["order"] = *o.order;
    if (o.lambda) {
      cs.erase("entropy_bits");
      cs["lambda"] = *o.lambda;
    }
    if (o.entropy) {
      cs.erase("lambda");
      cs["entropy_bits"] = *o.entropy;
    }
  }
  if (!o.snr.empty()) doc["snr_db"] = o.snr;
  if (!o.sigma_theta_sq.empty()) doc["sigma_theta_sq"] = o.sigma_theta_sq;
  if (!o.algorithms.empty()) doc["algorithms"] = o.algorithms;
  set_if(doc, "N", o.half_window);
  set_if(doc, "M", o.m_count);
  set_if(doc, "wrap_terms", o.wrap_terms);
  if (o.full_sequence_bp) doc["full_sequence_bp"] = true;
  set_if(doc, "realizations", o.realizations);
  set_if(doc, "symbols", o.symbols);
  set_if(doc, "seed", o.seed);
  if (o.exclude_edges) doc["exclude_edges"] = true;
  set_if(doc, "initial_phase", o.initial_phase);
  set_if(doc, "phi0", o.phi0);
  set_if(doc, "demapper", o.demapper);
  set_if(doc, "bps_opt_params", o.bps_opt_params);
  set_if(doc, "bps_opt_temperature", o.bps_opt_temperature);
  set_if(doc, "output", o.output);
  set_if(doc, "eval_realizations", o.eval_realizations);
  set_if(doc, "eval_seed", o.eval_seed);

  json sched = doc.contains("schedule") ? doc["schedule"] : json::object();
  set_if(sched, "epochs", o.epochs);
  set_if(sched, "lr", o.lr);
  set_if(sched, "batches_start", o.batches_start);
  set_if(sched, "batches_end", o.batches_end);
  set_if(sched, "batch_symbols_start", o.batch_symbols_start);
  set_if(sched, "batch_symbols_end", o.batch_symbols_end);
  set_if(sched, "seed", o.train_seed);
  set_if(sched, "init_temperature", o.init_temperature);
  set_if(sched, "loss", o.loss);
  set_if(sched, "validation_symbols", o.validation_symbols);
  if (!sched.empty()) doc["schedule"] = sched;
  return doc;
}

int exit_code(cpek_status s) {
  switch (s) {
    case CPEK_OK:
      return 0;
    case CPEK_ERR_CONFIG:
    case CPEK_ERR_INVALID_ARGUMENT:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

int report(cpek_status s, const char* what) {
  if (s != CPEK_OK) std::fprintf(stderr, "cpekit %s: %s\n", what, cpek_last_error());
  return exit_code(s);
}

// Owns a string returned by the C API.
struct ApiString {
  char* p = nullptr;
  ~ApiString() { cpek_string_free(p); }
};

int run_sweep(const Overrides& o) {
  const std::string cfg = build_config(o).dump();
  ApiString out;
  const auto s = cpek_sweep_run(cfg.c_str(), o.workers, &out.p);
  if (s != CPEK_OK) return report(s, "sweep");
  const auto doc = json::parse(out.p);
  std::fprintf(stderr, "sweep %s: %zu cells computed, %zu reused -> %s\n",
               doc["config_hash"].get<std::string>().c_str(),
               doc["computed_cells"].get<std::size_t>(), doc["reused_cells"].get<std::size_t>(),
               doc["output"].get<std::string>().c_str());
  return 0;
}

int run_eval(const Overrides& o) {
  const std::string cfg = build_config(o).dump();
  ApiString out;
  const auto s = cpek_eval_run(cfg.c_str(), o.workers, &out.p);
  if (s != CPEK_OK) return report(s, "eval");
  const auto doc = json::parse(out.p);
  if (o.output) {
    std::ofstream f(*o.output);
    f << doc.dump(2) << '\n';
    if (!f) {
      std::fprintf(stderr, "cpekit eval: cannot write '%s'\n", o.output->c_str());
      return kExitRuntime;
    }
  } else {
    std::cout << doc.dump(2) << '\n';
  }
  return 0;
}

int run_train(const Overrides& o) {
  json cfg = build_config(o);
  if (!o.output && !cfg.contains("output")) cfg["output"] = "bps_opt_params.json";
  const std::string text = cfg.dump();
  ApiString out;
  const auto s = cpek_train_run(text.c_str(), o.workers, &out.p);
  if (s != CPEK_OK) return report(s, "train");
  const auto doc = json::parse(out.p);
  const auto& curve = doc["loss_curve"];
  std::fprintf(stderr, "train: %lld steps, final loss %s, temperature %s -> %s\n",
               doc["steps"].get<long long>(), curve.empty() ? "n/a" : curve.back().dump().c_str(),
               doc["params"]["temperature"].dump().c_str(), cfg["output"].get<std::string>().c_str());
  return 0;
}

int run_plot_data(const std::string& results, const std::string& params, const std::string& prefix) {
  ApiString out;
  const auto s = cpek_plot_data(results.c_str(), params.empty() ? nullptr : params.c_str(),
                                prefix.c_str(), &out.p);
  if (s != CPEK_OK) return report(s, "plot-data");
  for (const auto& f : json::parse(out.p)) std::cout << f.get<std::string>() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Carrier phase estimation experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cpek_version());

  Overrides sweep_o, train_o, eval_o;
  auto* sweep = app.add_subcommand("sweep", "Run a BMI sweep over an SNR x phase-noise grid");
  add_experiment_flags(sweep, sweep_o);
  auto* train = app.add_subcommand("train", "Train the weighted BPS for one cell");
  add_experiment_flags(train, train_o);
  add_training_flags(train, train_o);
  auto* eval = app.add_subcommand("eval", "Evaluate cells without writing sweep files");
  add_experiment_flags(eval, eval_o);

  std::string results, params, prefix;
  auto* plot = app.add_subcommand("plot-data", "Emit plot-ready CSVs from a results file");
  plot->add_option("-r,--results", results, "Summary CSV written by sweep")->required();
  plot->add_option("-p,--params", params, "Trained weights JSON");
  plot->add_option("--prefix", prefix, "Output path prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (sweep->parsed()) return run_sweep(sweep_o);
    if (train->parsed()) return run_train(train_o);
    if (eval->parsed()) return run_eval(eval_o);
    if (plot->parsed()) return run_plot_data(results, params, prefix);
  } catch (const json::exception& e) {
    std::fprintf(stderr, "cpekit: invalid config: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cpekit: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
