// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "channel.hpp"
#include "estimators.hpp"
#include "training.hpp"

namespace cpekit {

/// Invalid or inconsistent experiment configuration. Raised before any
/// simulation work starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConstellationSpec {
  int order = 64;
  std::optional<double> lambda;
  std::optional<double> entropy_bits;
};

struct AlgorithmOverride {
  std::optional<int> m_count;
  std::optional<int> wrap_terms;
  std::optional<std::string> params_path;
};

enum class DemapperMode { per_realization, per_cell };

struct ExperimentConfig {
  ConstellationSpec constellation;
  std::vector<double> snr_db;
  std::vector<double> sigma_theta_sq;
  std::vector<Algorithm> algorithms;
  int half_window = 32;
  int m_count = 60;
  int wrap_terms = 3;
  bool full_sequence_bp = false;
  int realizations = 100;
  std::size_t symbols = 1u << 15;
  std::uint64_t seed = 1;
  bool exclude_edges = false;
  InitialPhase initial_phase = InitialPhase::fixed;
  double phi0 = 0.0;
  DemapperMode demapper = DemapperMode::per_realization;
  std::map<Algorithm, AlgorithmOverride> overrides;
  std::optional<std::string> bps_opt_params;  // default for bps_opt
  double bps_opt_temperature = 0.1;           // untrained fallback
  std::string output = "results.csv";
  TrainSchedule schedule;
  int eval_realizations = 0;                  // train: held-out evaluation
  std::uint64_t eval_seed = 1'000'000;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  /// FNV-1a of the canonical JSON without output location and worker count.
  std::string hash() const;
  void validate() const;
};

Constellation build_constellation(const ConstellationSpec& spec);

struct RealizationResult {
  double bmi = 0.0;
  double sigma_opt = 0.0;
  std::size_t slip_events = 0;
};

struct CellResult {
  double snr_db = 0.0;
  double sigma_theta_sq = 0.0;
  Algorithm algorithm = Algorithm::bps;
  int m_count = 0;
  int half_window = 0;
  std::vector<RealizationResult> realizations;
  double bmi_median = 0.0;
  double bmi_q1 = 0.0;
  double bmi_q3 = 0.0;
  double sigma_opt_median = 0.0;
  std::size_t slip_events = 0;
  double wall_seconds = 0.0;
};

/// Median of a copy (mean of the two middle values for even counts).
double median(std::vector<double> v);
/// Linear-interpolation quantile, q in [0, 1].
double quantile(std::vector<double> v, double q);

struct SweepOutcome {
  std::vector<CellResult> cells;
  std::size_t computed_cells = 0;
  std::size_t reused_cells = 0;
};

/// Runs every (snr, sigma_theta_sq, algorithm) cell. When `output` already
/// holds rows for this config hash those cells are reused; the summary CSV,
/// the per-realization CSV and a timing sidecar are (re)written in cell order.
SweepOutcome run_sweep(const ExperimentConfig& cfg, std::size_t workers);

/// Same evaluation without touching the filesystem.
std::vector<CellResult> evaluate_cells(const ExperimentConfig& cfg, std::size_t workers);

/// Trains one model for the single (snr, sigma_theta_sq) cell, writes the
/// params JSON to cfg.output and the weights CSV next to it.
TrainReport run_train(const ExperimentConfig& cfg, std::size_t workers,
                      std::vector<CellResult>* held_out = nullptr);

nlohmann::json cells_to_json(const std::vector<CellResult>& cells);

struct SummaryRow {
  std::string config_hash;
  double snr_db = 0.0;
  double sigma_theta_sq = 0.0;
  std::string algorithm;
  int m_count = 0;
  int half_window = 0;
  double bmi_median = 0.0;
};

std::vector<SummaryRow> read_summary_csv(const std::string& path);

/// Writes one BMI-vs-SNR CSV per sigma_theta_sq (one column per algorithm)
/// and, if params are given, a weights CSV. Returns the files written.
std::vector<std::string> emit_plot_data(const std::vector<SummaryRow>& rows,
                                        const BpsOptParams* params, const std::string& prefix);

inline constexpr const char* kSummaryHeader =
    "config_hash,snr_db,sigma_theta_sq,algorithm,M,N,realizations,symbols,bmi_median,bmi_q1,"
    "bmi_q3,sigma_opt_median,slip_events";
inline constexpr const char* kRealizationHeader =
    "config_hash,snr_db,sigma_theta_sq,algorithm,M,N,realization,bmi,sigma_opt,slip_events";

}  // namespace cpekit
