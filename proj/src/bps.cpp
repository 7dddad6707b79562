// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "estimators.hpp"
#include "logsumexp.hpp"

namespace cpekit {

namespace {

void check_window(std::size_t count, const EstimatorConfig& cfg) {
  if (cfg.half_window < 0) throw std::invalid_argument("half window must be >= 0");
  if (count < 2 * static_cast<std::size_t>(cfg.half_window) + 1) {
    throw std::invalid_argument("sequence of " + std::to_string(count) +
                                " symbols is shorter than the window 2N+1 = " +
                                std::to_string(2 * cfg.half_window + 1));
  }
}

struct Window {
  std::size_t lo, hi;  // inclusive
};

Window window_at(std::size_t k, std::size_t count, int half_window) {
  const auto n = static_cast<std::size_t>(half_window);
  return {k >= n ? k - n : 0, std::min(count - 1, k + n)};
}

// Sum each column of `table` over the (truncated) window around every symbol
// and pick the best grid index per symbol.
template <typename Pick>
std::vector<double> windowed_decision(const Matrix& table, const EstimatorConfig& cfg, Pick pick) {
  const std::size_t count = table.rows();
  const std::size_t m_count = table.cols();
  std::vector<double> acc(m_count);
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto [lo, hi] = window_at(k, count, cfg.half_window);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = lo; i <= hi; ++i) {
      const auto row = table.row(i);
      for (std::size_t m = 0; m < m_count; ++m) acc[m] += row[m];
    }
    out[k] = cfg.grid.phases[pick(acc)];
  }
  return out;
}

}  // namespace

BpsOptParams::BpsOptParams(std::vector<double> raw_weights, double raw_temp)
    : raw_weights_(std::move(raw_weights)), raw_temp_(raw_temp) {
  if (raw_weights_.empty() || raw_weights_.size() % 2 == 0) {
    throw std::invalid_argument("weight vector must have odd length 2N+1");
  }
  if (!std::isfinite(raw_temp_)) throw std::invalid_argument("temperature must be finite");
  // w = softmax(raw)
  double mx = raw_weights_[0];
  for (double r : raw_weights_) mx = std::max(mx, r);
  weights_.resize(raw_weights_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < raw_weights_.size(); ++i) {
    weights_[i] = std::exp(raw_weights_[i] - mx);
    total += weights_[i];
  }
  for (auto& w : weights_) w /= total;
  temperature_ = std::exp(raw_temp_);
}

BpsOptParams BpsOptParams::uniform(int half_window, double temperature) {
  if (half_window < 0) throw std::invalid_argument("half window must be >= 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  return BpsOptParams(std::vector<double>(2 * half_window + 1, 0.0), std::log(temperature));
}

BpsOptParams BpsOptParams::from_weights(std::span<const double> weights, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  std::vector<double> raw(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0)) throw std::invalid_argument("weights must be positive");
    raw[i] = std::log(weights[i]);
  }
  return BpsOptParams(std::move(raw), std::log(temperature));
}

std::vector<double> bps_estimate(std::span<const cplx> y, const EstimatorConfig& cfg,
                                 const Constellation& c) {
  check_window(y.size(), cfg);
  const Matrix d = min_distances(y, cfg.grid, c);
  return windowed_decision(d, cfg, [](const std::vector<double>& v) { return argmin(v); });
}

std::vector<double> cpn_estimate(std::span<const cplx> y, const EstimatorConfig& cfg,
                                 const Constellation& c) {
  check_window(y.size(), cfg);
  const Matrix log_r = r_table(y, cfg.grid, c, cfg.sigma_n_sq);
  return windowed_decision(log_r, cfg, [](const std::vector<double>& v) { return argmax(v); });
}

std::vector<double> bps_opt_estimate(std::span<const cplx> y, const EstimatorConfig& cfg,
                                     const Constellation& c, const BpsOptParams& params) {
  check_window(y.size(), cfg);
  if (params.half_window() != cfg.half_window) {
    throw std::invalid_argument("weight vector length does not match 2N+1");
  }
  const double t = params.temperature();
  if (!(t > 0.0)) throw std::invalid_argument("temperature must be > 0");

  const Matrix d = min_distances(y, cfg.grid, c);
  const std::size_t count = y.size();
  const std::size_t m_count = cfg.grid.size();
  const double n = cfg.grid.sym_order;
  const double half = std::numbers::pi / n;
  std::vector<cplx> readout(m_count);
  for (std::size_t m = 0; m < m_count; ++m) readout[m] = std::polar(1.0, n * cfg.grid.phases[m]);

  const auto w = params.weights();
  const auto nh = static_cast<std::size_t>(cfg.half_window);
  std::vector<double> dsum(m_count);
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto [lo, hi] = window_at(k, count, cfg.half_window);
    std::fill(dsum.begin(), dsum.end(), 0.0);
    double wsum = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) {
      const double wi = w[i + nh - k];
      wsum += wi;
      const auto row = d.row(i);
      for (std::size_t m = 0; m < m_count; ++m) dsum[m] += wi * row[m];
    }
    // Truncated edge windows keep the weights summing to one.
    if (hi - lo != 2 * nh) {
      for (auto& v : dsum) v /= wsum;
    }
    const auto s = softmin(dsum, t);
    cplx z{0.0, 0.0};
    for (std::size_t m = 0; m < m_count; ++m) z += s[m] * readout[m];
    double phi;
    if (std::abs(z) < 1e-12) {
      phi = cfg.grid.phases[argmin(dsum)];
    } else {
      phi = std::atan2(z.imag(), z.real()) / n;
      if (phi >= half) phi -= 2.0 * half;
    }
    out[k] = phi;
  }
  return out;
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::bps: return "bps";
    case Algorithm::cpn: return "cpn";
    case Algorithm::map_bp: return "map_bp";
    case Algorithm::bps_opt: return "bps_opt";
  }
  return "unknown";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::bps, Algorithm::cpn, Algorithm::map_bp, Algorithm::bps_opt}) {
    if (name == to_string(a)) return a;
  }
  return std::nullopt;
}

std::vector<double> estimate(Algorithm a, std::span<const cplx> y, const EstimatorConfig& cfg,
                             const Constellation& c, const BpsOptParams* params) {
  switch (a) {
    case Algorithm::bps: return bps_estimate(y, cfg, c);
    case Algorithm::cpn: return cpn_estimate(y, cfg, c);
    case Algorithm::map_bp: return map_bp_estimate(y, cfg, c);
    case Algorithm::bps_opt:
      if (params == nullptr) throw std::invalid_argument("bps_opt requires weight parameters");
      return bps_opt_estimate(y, cfg, c, *params);
  }
  throw std::invalid_argument("unknown algorithm");
}

}  // namespace cpekit
