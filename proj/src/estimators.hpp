// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "constellation.hpp"
#include "matrix.hpp"

namespace cpekit {

/// Test phases phi_i = -pi/n + (i-1) 2 pi / (n M), i = 1..M, covering one
/// rotational-symmetry sector.
struct PhaseGrid {
  std::vector<double> phases;
  int sym_order = 4;

  std::size_t size() const { return phases.size(); }
  double step() const;
};

PhaseGrid make_grid(int m_count, int sym_order);

struct EstimatorConfig {
  int half_window = 32;
  PhaseGrid grid;
  /// Variance in the AWGN factor exp(-|y - x e^{j phi}|^2 / (2 sigma_n_sq)).
  /// For a channel with total complex noise variance s this is s / 2; see
  /// for_channel().
  double sigma_n_sq = 0.01;
  double sigma_theta_sq = 0.0;
  int wrap_terms = 3;
  /// Replace the per-symbol windowed recursion with one forward-backward pass
  /// over the whole sequence.
  bool full_sequence_bp = false;

  /// Config whose R factor is the matched likelihood for a channel with total
  /// complex noise variance `channel_sigma_n_sq`.
  static EstimatorConfig for_channel(int half_window, PhaseGrid grid, double channel_sigma_n_sq,
                                     double sigma_theta_sq);
};

/// Window weights and softmin temperature of the weighted BPS. Stored in the
/// unconstrained form used for training: w = softmax(raw_weights),
/// t = exp(raw_temp).
class BpsOptParams {
 public:
  BpsOptParams() = default;
  BpsOptParams(std::vector<double> raw_weights, double raw_temp);

  static BpsOptParams uniform(int half_window, double temperature);
  /// Weights must be positive; they are renormalized to sum to one.
  static BpsOptParams from_weights(std::span<const double> weights, double temperature);

  std::span<const double> raw_weights() const { return raw_weights_; }
  double raw_temp() const { return raw_temp_; }
  std::span<const double> weights() const { return weights_; }
  double temperature() const { return temperature_; }
  int half_window() const { return static_cast<int>(weights_.size() / 2); }

 private:
  std::vector<double> raw_weights_;
  double raw_temp_ = 0.0;
  std::vector<double> weights_;
  double temperature_ = 1.0;
};

/// log R(y_k, phi_m) = log sum_x P(x) exp(-|y_k - x e^{j phi_m}|^2 / (2 sigma_n_sq)),
/// K x M. The Gaussian normalization constant is dropped.
Matrix r_table(std::span<const cplx> y, const PhaseGrid& grid, const Constellation& c,
               double sigma_n_sq);

/// Effective wrapped-normal truncation |r| <= max(r_max, ceil(5 sigma_theta n / 2pi)).
int effective_wrap_terms(double sigma_theta_sq, int sym_order, int r_max);

/// log Q(phi_i | phi_j) for the wrapped normal with period 2 pi / n, rows
/// normalized in the probability domain. sigma_theta_sq == 0 is floored to 1e-12.
Matrix q_matrix(const PhaseGrid& grid, double sigma_theta_sq, int r_max);

/// min_x |y_k - x e^{j phi_m}|^2, K x M.
Matrix min_distances(std::span<const cplx> y, const PhaseGrid& grid, const Constellation& c);

/// exp(-x_i / t) / sum_j exp(-x_j / t), shifted by min(x).
std::vector<double> softmin(std::span<const double> x, double t);

/// Per-symbol estimates. Every estimator truncates its window at the sequence
/// boundaries; symbols with k < N or k >= K - N are edge symbols.
std::vector<double> bps_estimate(std::span<const cplx> y, const EstimatorConfig& cfg,
                                 const Constellation& c);
std::vector<double> cpn_estimate(std::span<const cplx> y, const EstimatorConfig& cfg,
                                 const Constellation& c);
std::vector<double> map_bp_estimate(std::span<const cplx> y, const EstimatorConfig& cfg,
                                    const Constellation& c);
std::vector<double> bps_opt_estimate(std::span<const cplx> y, const EstimatorConfig& cfg,
                                     const Constellation& c, const BpsOptParams& params);

/// Normalized log-belief of symbol k from the windowed sum-product recursion.
std::vector<double> map_bp_marginal(const Matrix& log_r, const Matrix& log_q, std::size_t k,
                                    int half_window);

/// Normalized log-beliefs of every symbol from a single forward-backward pass.
Matrix map_bp_forward_backward(const Matrix& log_r, const Matrix& log_q);

struct BruteForceResult {
  std::size_t argmax_index;
  double phase;
  std::vector<double> log_marginal;  // normalized: log_sum_exp == 0
};

/// Center marginal of the discretized posterior by enumerating all M^(2N+1)
/// phase tuples. Refuses when M^(2N+1) > 1e7.
BruteForceResult brute_force_map(std::span<const cplx> y_window, const EstimatorConfig& cfg,
                                 const Constellation& c);

enum class Algorithm { bps, cpn, map_bp, bps_opt };

std::string_view to_string(Algorithm a);
std::optional<Algorithm> parse_algorithm(std::string_view name);

std::vector<double> estimate(Algorithm a, std::span<const cplx> y, const EstimatorConfig& cfg,
                             const Constellation& c, const BpsOptParams* params = nullptr);

inline bool is_edge(std::size_t k, std::size_t count, int half_window) {
  const auto n = static_cast<std::size_t>(half_window);
  return k < n || k + n >= count;
}

}  // namespace cpekit
