// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cpekit {

using cplx = std::complex<double>;

/// Square QAM point set with a symbol distribution and Gray bit labels.
///
/// Points are normalized to unit average energy under `probs()`. The
/// unshaped reference geometry (unit energy under uniform probabilities) is
/// kept alongside so that shaping is always applied relative to the same
/// geometry, whatever the current distribution is.
class Constellation {
 public:
  /// Gray-labeled square QAM with uniform probabilities. `order` must be one
  /// of 4, 16, 64, 256.
  static Constellation qam(int order);

  std::span<const cplx> points() const { return points_; }
  std::span<const double> probs() const { return probs_; }
  std::span<const std::uint32_t> labels() const { return labels_; }
  std::span<const cplx> base_points() const { return base_points_; }

  std::size_t size() const { return points_.size(); }
  int bits_per_symbol() const { return bits_per_symbol_; }
  int sym_order() const { return sym_order_; }
  /// Maxwell-Boltzmann parameter this distribution was built with (0 = uniform).
  double lambda() const { return lambda_; }

  /// Bit `b` of point `idx`; b = 0 is the most significant label bit.
  int bit(std::size_t idx, int b) const {
    return static_cast<int>((labels_[idx] >> (bits_per_symbol_ - 1 - b)) & 1u);
  }

  double average_energy() const;

  nlohmann::json to_json() const;

 private:
  friend Constellation maxwell_boltzmann_shape(const Constellation&, double);

  std::vector<cplx> points_;
  std::vector<double> probs_;
  std::vector<std::uint32_t> labels_;
  std::vector<cplx> base_points_;
  int bits_per_symbol_ = 0;
  int sym_order_ = 4;
  double lambda_ = 0.0;
};

/// P(x) proportional to exp(-lambda |x|^2) over the unshaped unit-energy
/// geometry, then points rescaled to unit energy under the new distribution.
Constellation maxwell_boltzmann_shape(const Constellation& c, double lambda);

struct ShapedConstellation {
  Constellation constellation;
  double lambda;
};

/// Bisection on lambda so that entropy(result) == target_bits (tolerance 1e-9,
/// at most 200 iterations).
ShapedConstellation shape_for_entropy(const Constellation& c, double target_bits);

/// Entropy of the symbol distribution in bits.
double entropy(const Constellation& c);
/// -sum p log2 p; zero entries contribute nothing.
double entropy(std::span<const double> probs);

struct SymbolStream {
  std::vector<std::uint8_t> bits;  // count x bits_per_symbol, row-major
  std::vector<std::uint32_t> indices;
  std::vector<cplx> symbols;
};

/// I.i.d. draws by inverse CDF over the fixed point ordering.
SymbolStream sample(const Constellation& c, std::size_t count, std::uint64_t seed);

}  // namespace cpekit
