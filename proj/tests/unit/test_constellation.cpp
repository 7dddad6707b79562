// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "constellation.hpp"

using namespace cpekit;

namespace {

// Entropy summed in long double as the reference.
long double entropy_ld(const Constellation& c) {
  long double h = 0.0L;
  for (double p : c.probs()) {
    if (p > 0.0) h -= static_cast<long double>(p) * std::log2(static_cast<long double>(p));
  }
  return h;
}

void check_invariants(const Constellation& c) {
  double sum = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c.probs()[i] > 0.0);
    sum += c.probs()[i];
    energy += c.probs()[i] * std::norm(c.points()[i]);
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
  CHECK(std::abs(energy - 1.0) < 1e-12);
  CHECK(std::has_single_bit(c.size()));
  std::set<std::uint32_t> labels(c.labels().begin(), c.labels().end());
  CHECK(labels.size() == c.size());
  CHECK(*labels.rbegin() == c.size() - 1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      CHECK(std::abs(c.points()[i] - c.points()[j]) > 1e-9);
    }
  }
}

}  // namespace

TEST_CASE("QPSK geometry") {
  const auto c = Constellation::qam(4);
  REQUIRE(c.size() == 4);
  CHECK(c.bits_per_symbol() == 2);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c.probs()[i] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(std::abs(std::abs(c.points()[i].real()) - 1 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(std::abs(c.points()[i].imag()) - 1 / std::sqrt(2.0)) < 1e-15);
  }
  check_invariants(c);
}

TEST_CASE("64-QAM basics") {
  const auto c = Constellation::qam(64);
  CHECK(c.size() == 64);
  CHECK(c.bits_per_symbol() == 6);
  CHECK(c.sym_order() == 4);
  check_invariants(c);
  CHECK(entropy(c) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("invalid orders are rejected") {
  for (int order : {0, 1, 2, 6, 8, 32, 128, 1024}) {
    CHECK_THROWS_AS(Constellation::qam(order), std::invalid_argument);
  }
}

TEST_CASE("Gray labeling: nearest neighbours differ in exactly one bit") {
  for (int order : {4, 16, 64, 256}) {
    const auto c = Constellation::qam(order);
    double dmin = 1e9;
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = i + 1; j < c.size(); ++j) dmin = std::min(dmin, std::abs(c.points()[i] - c.points()[j]));
    }
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = 0; j < c.size(); ++j) {
        if (i != j && std::abs(std::abs(c.points()[i] - c.points()[j]) - dmin) < 1e-9) {
          CHECK(std::popcount(c.labels()[i] ^ c.labels()[j]) == 1);
        }
      }
    }
  }
}

TEST_CASE("bit() is MSB first") {
  const auto c = Constellation::qam(16);
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::uint32_t rebuilt = 0;
    for (int b = 0; b < 4; ++b) rebuilt = (rebuilt << 1) | static_cast<std::uint32_t>(c.bit(i, b));
    CHECK(rebuilt == c.labels()[i]);
  }
}

TEST_CASE("quarter rotation maps the point set onto itself") {
  for (int order : {4, 16, 64, 256}) {
    const auto c = Constellation::qam(order);
    const cplx rot = std::polar(1.0, std::numbers::pi / 2);
    for (auto p : c.points()) {
      const auto q = p * rot;
      const bool found = std::any_of(c.points().begin(), c.points().end(),
                                     [&](cplx r) { return std::abs(r - q) < 1e-9; });
      CHECK(found);
    }
  }
}

TEST_CASE("Maxwell-Boltzmann shaping") {
  const auto base = Constellation::qam(64);
  SUBCASE("lambda = 0 is uniform") {
    const auto c = maxwell_boltzmann_shape(base, 0.0);
    CHECK(entropy(c) == doctest::Approx(6.0).epsilon(1e-14));
    check_invariants(c);
  }
  SUBCASE("invariants for a range of lambda") {
    for (double lambda : {0.1, 0.5, 1.0, 2.0, 5.0}) check_invariants(maxwell_boltzmann_shape(base, lambda));
  }
  SUBCASE("probabilities follow exp(-lambda |x|^2) on the base geometry") {
    const double lambda = 1.3;
    const auto c = maxwell_boltzmann_shape(base, lambda);
    long double z = 0.0L;
    for (auto p : base.points()) z += std::exp(-static_cast<long double>(lambda) * std::norm(p));
    for (std::size_t i = 0; i < c.size(); ++i) {
      const long double expect = std::exp(-static_cast<long double>(lambda) * std::norm(base.points()[i])) / z;
      CHECK(std::abs(c.probs()[i] - static_cast<double>(expect)) < 1e-15);
    }
  }
  SUBCASE("large lambda concentrates on the four inner points") {
    const auto c = maxwell_boltzmann_shape(base, 200.0);
    CHECK(entropy(c) == doctest::Approx(2.0).epsilon(1e-6));
  }
  SUBCASE("shaping a shaped constellation reuses the base geometry") {
    const auto once = maxwell_boltzmann_shape(base, 0.8);
    const auto twice = maxwell_boltzmann_shape(maxwell_boltzmann_shape(base, 3.0), 0.8);
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(std::abs(once.points()[i] - twice.points()[i]) < 1e-14);
      CHECK(std::abs(once.probs()[i] - twice.probs()[i]) < 1e-15);
    }
  }
  SUBCASE("negative lambda is rejected") {
    CHECK_THROWS_AS(maxwell_boltzmann_shape(base, -0.1), std::invalid_argument);
  }
}

TEST_CASE("shape_for_entropy") {
  const auto base = Constellation::qam(64);
  SUBCASE("full entropy gives lambda = 0") {
    const auto s = shape_for_entropy(base, 6.0);
    CHECK(s.lambda == 0.0);
  }
  for (double target : {5.0, 5.5, 4.0, 2.5}) {
    CAPTURE(target);
    const auto s = shape_for_entropy(base, target);
    CHECK(std::abs(static_cast<double>(entropy_ld(s.constellation)) - target) < 1e-6);
    CHECK(std::abs(entropy(s.constellation) - target) < 1e-6);
    check_invariants(s.constellation);
    CHECK(s.constellation.lambda() == s.lambda);
  }
  SUBCASE("out of range") {
    CHECK_THROWS_AS(shape_for_entropy(base, 7.0), std::invalid_argument);
    CHECK_THROWS_AS(shape_for_entropy(base, 1.5), std::invalid_argument);
  }
}

TEST_CASE("entropy of a point mass tends to zero") {
  std::vector<double> p(64, 0.0);
  p[0] = 1.0;
  CHECK(entropy(p) == 0.0);
  for (double eps : {1e-3, 1e-6, 1e-9}) {
    std::vector<double> q(64, eps / 63);
    q[0] = 1.0 - eps;
    CHECK(entropy(q) < 20 * eps * std::log2(1 / eps) + 1e-12);
  }
  const std::vector<double> uniform(64, 1.0 / 64);
  CHECK(entropy(uniform) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("sampling") {
  const auto c = shape_for_entropy(Constellation::qam(64), 5.0).constellation;
  SUBCASE("frequencies pass a chi-square test") {
    const std::size_t count = 1'000'000;
    const auto s = sample(c, count, 42);
    std::vector<double> freq(c.size(), 0.0);
    for (auto i : s.indices) freq[i] += 1.0;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double e = c.probs()[i] * count;
      chi2 += (freq[i] - e) * (freq[i] - e) / e;
      // Per-cell 3 sigma multinomial band, padded for 64 simultaneous checks.
      const double sd = std::sqrt(count * c.probs()[i] * (1 - c.probs()[i]));
      CHECK(std::abs(freq[i] - e) < 4.5 * sd);
    }
    // 63 degrees of freedom; the 0.999 quantile is about 103.4.
    CHECK(chi2 < 103.4);
  }
  SUBCASE("bits and symbols match the drawn indices") {
    const auto s = sample(c, 1000, 7);
    for (std::size_t k = 0; k < 1000; ++k) {
      CHECK(s.symbols[k] == c.points()[s.indices[k]]);
      for (int b = 0; b < 6; ++b) CHECK(s.bits[k * 6 + b] == c.bit(s.indices[k], b));
    }
  }
  SUBCASE("count = 1 returns a member") {
    const auto s = sample(c, 1, 123);
    REQUIRE(s.symbols.size() == 1);
    CHECK(std::find(c.points().begin(), c.points().end(), s.symbols[0]) != c.points().end());
  }
  SUBCASE("same seed, same stream") {
    const auto a = sample(c, 5000, 99);
    const auto b = sample(c, 5000, 99);
    CHECK(a.indices == b.indices);
    CHECK(a.bits == b.bits);
    const auto d = sample(c, 5000, 100);
    CHECK(a.indices != d.indices);
  }
}
