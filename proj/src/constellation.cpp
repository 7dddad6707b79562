// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include "constellation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rng.hpp"

namespace cpekit {

namespace {

std::uint32_t gray(std::uint32_t i) { return i ^ (i >> 1); }

void normalize_energy(std::vector<cplx>& pts, std::span<const double> probs) {
  double e = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) e += probs[i] * std::norm(pts[i]);
  const double scale = 1.0 / std::sqrt(e);
  for (auto& p : pts) p *= scale;
}

}  // namespace

Constellation Constellation::qam(int order) {
  int side = 0;
  switch (order) {
    case 4: side = 2; break;
    case 16: side = 4; break;
    case 64: side = 8; break;
    case 256: side = 16; break;
    default:
      throw std::invalid_argument("QAM order must be one of 4, 16, 64, 256 (got " +
                                  std::to_string(order) + ")");
  }
  const int half_bits = std::countr_zero(static_cast<unsigned>(side));

  Constellation c;
  c.bits_per_symbol_ = 2 * half_bits;
  c.sym_order_ = 4;
  c.points_.reserve(order);
  c.labels_.reserve(order);
  for (int i = 0; i < side; ++i) {
    for (int q = 0; q < side; ++q) {
      const double re = -(side - 1) + 2.0 * i;
      const double im = -(side - 1) + 2.0 * q;
      c.points_.emplace_back(re, im);
      c.labels_.push_back((gray(i) << half_bits) | gray(q));
    }
  }
  c.probs_.assign(order, 1.0 / order);
  normalize_energy(c.points_, c.probs_);
  c.base_points_ = c.points_;
  return c;
}

double Constellation::average_energy() const {
  double e = 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) e += probs_[i] * std::norm(points_[i]);
  return e;
}

nlohmann::json Constellation::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points_) pts.push_back({p.real(), p.imag()});
  return {{"points", pts},
          {"probs", probs_},
          {"labels", labels_},
          {"sym_order", sym_order_},
          {"lambda", lambda_}};
}

Constellation maxwell_boltzmann_shape(const Constellation& c, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("Maxwell-Boltzmann lambda must be finite and >= 0");
  }
  Constellation out = c;
  const auto base = c.base_points();
  double e_min = std::norm(base[0]);
  for (const auto& p : base) e_min = std::min(e_min, std::norm(p));

  // Shifting by the minimum energy keeps the largest weight at exactly 1.
  double total = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    out.probs_[i] = std::exp(-lambda * (std::norm(base[i]) - e_min));
    total += out.probs_[i];
  }
  for (auto& p : out.probs_) p /= total;

  out.points_.assign(base.begin(), base.end());
  normalize_energy(out.points_, out.probs_);
  out.lambda_ = lambda;
  return out;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

double entropy(const Constellation& c) { return entropy(c.probs()); }

ShapedConstellation shape_for_entropy(const Constellation& c, double target_bits) {
  const double h_max = std::log2(static_cast<double>(c.size()));
  // Four innermost points share the smallest energy, so the entropy floor is 2.
  constexpr double kFloor = 2.0;
  constexpr double kTol = 1e-9;
  if (!(target_bits > kFloor && target_bits <= h_max + kTol)) {
    throw std::invalid_argument("target entropy " + std::to_string(target_bits) +
                                " bits is outside the achievable range (2, " +
                                std::to_string(h_max) + "]");
  }
  if (target_bits >= h_max - kTol) return {maxwell_boltzmann_shape(c, 0.0), 0.0};

  double lo = 0.0;
  double hi = 1.0;
  while (entropy(maxwell_boltzmann_shape(c, hi)) > target_bits) {
    lo = hi;
    hi *= 2.0;
    if (hi > 512.0) {
      throw std::invalid_argument("target entropy too close to the floor of 2 bits");
    }
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double h = entropy(maxwell_boltzmann_shape(c, mid));
    if (std::abs(h - target_bits) <= kTol) break;
    if (h > target_bits) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {maxwell_boltzmann_shape(c, mid), mid};
}

SymbolStream sample(const Constellation& c, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("sample count must be >= 1");
  std::vector<double> cdf(c.size());
  std::partial_sum(c.probs().begin(), c.probs().end(), cdf.begin());
  cdf.back() = 1.0;

  Rng rng(seed, stream::kSymbols);
  const int m = c.bits_per_symbol();
  SymbolStream out;
  out.indices.resize(count);
  out.symbols.resize(count);
  out.bits.resize(count * m);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = rng.uniform();
    const auto idx = static_cast<std::uint32_t>(
        std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    out.indices[k] = idx;
    out.symbols[k] = c.points()[idx];
    for (int b = 0; b < m; ++b) out.bits[k * m + b] = static_cast<std::uint8_t>(c.bit(idx, b));
  }
  return out;
}

}  // namespace cpekit
