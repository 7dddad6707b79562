// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "constellation.hpp"
#include "matrix.hpp"

namespace cpekit {

inline constexpr double kDefaultLlrClamp = 50.0;

/// Bit LLRs L = log P(b=0 | x_hat) / P(b=1 | x_hat), K x m, clamped to +-clamp.
struct LlrFrame {
  Matrix llrs;
  double clamp = kDefaultLlrClamp;
};

struct BmiReport {
  double bmi_bits = 0.0;      // raw value clamped at zero
  double raw_bmi_bits = 0.0;
  bool negative_clamped = false;
  double entropy_bits = 0.0;
  double demapper_sigma_sq = 0.0;
  std::size_t num_symbols_scored = 0;
  bool edge_excluded = false;
  bool degenerate = false;

  nlohmann::json to_json() const;
};

/// Circular Gaussian demapper with symbol priors and noise variance
/// `sigma_demap_sq` (metric exp(-|x_hat - x|^2 / sigma_demap_sq)).
LlrFrame llrs(std::span<const cplx> x_hat, const Constellation& c, double sigma_demap_sq,
              double clamp = kDefaultLlrClamp);

/// H(X) - sum_b mean_k log2(1 + exp(-(1 - 2 bit) L)). Returns bits/symbol.
double bmi(std::span<const std::uint8_t> bits, const LlrFrame& frame, const Constellation& c);

/// Golden-section search of log(sigma^2) over [1e-6, 10], tolerance 1e-4,
/// maximizing the BMI.
BmiReport optimize_demapper_variance(std::span<const cplx> x_hat,
                                     std::span<const std::uint8_t> bits, const Constellation& c);

/// One demapper variance for several frames, maximizing their mean BMI. The
/// report carries the mean BMI and the total number of scored symbols.
BmiReport optimize_demapper_variance_shared(std::span<const std::span<const cplx>> x_hat,
                                            std::span<const std::span<const std::uint8_t>> bits,
                                            const Constellation& c);

/// BMI report at a fixed demapper variance.
BmiReport bmi_report(std::span<const cplx> x_hat, std::span<const std::uint8_t> bits,
                     const Constellation& c, double sigma_demap_sq);

}  // namespace cpekit
