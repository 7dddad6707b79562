// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace cpekit {

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

// Lowest index wins ties in both helpers.
template <typename Range>
std::size_t argmax(const Range& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < std::size(v); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

template <typename Range>
std::size_t argmin(const Range& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < std::size(v); ++i) {
    if (v[i] < v[best]) best = i;
  }
  return best;
}

}  // namespace cpekit
