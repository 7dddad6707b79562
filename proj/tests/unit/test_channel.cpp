// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "channel.hpp"
#include "constellation.hpp"
#include "rng.hpp"

using namespace cpekit;

namespace {

struct Moments {
  double mean = 0, var = 0, skew = 0, kurt = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  const double n = static_cast<double>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : v) {
    const double d = x - m.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m.var = m2;
  m.skew = m3 / std::pow(m2, 1.5);
  m.kurt = m4 / (m2 * m2) - 3.0;
  return m;
}

}  // namespace

TEST_CASE("rng is reproducible and streams differ") {
  Rng a(5, 1), b(5, 1), c(5, 2), d(6, 1);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  CHECK(a.uniform() != c.uniform());
  CHECK(Rng(5, 1).gaussian() != d.gaussian());
}

TEST_CASE("snr_to_noise_var") {
  const auto c = Constellation::qam(16);
  CHECK(snr_to_noise_var(0.0, c) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(snr_to_noise_var(10.0, c) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(snr_to_noise_var(20.0, c) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(snr_to_noise_var(kNoiseOff, c) == 0.0);
}

TEST_CASE("phase path") {
  SUBCASE("zero variance is constant") {
    const auto p = phase_path(0.0, 1000, 3, 0.42);
    for (double x : p) CHECK(x == 0.42);
  }
  SUBCASE("starts at phi0") {
    CHECK(phase_path(1e-3, 10, 1, -0.2)[0] == -0.2);
  }
  SUBCASE("negative variance is rejected") {
    CHECK_THROWS_AS(phase_path(-1e-6, 10, 1, 0.0), std::invalid_argument);
  }
  SUBCASE("increment statistics at 1.18e-4") {
    const double s2 = 1.18e-4;
    const std::size_t count = 1'000'000;
    const auto p = phase_path(s2, count + 1, 11, 0.0);
    std::vector<double> inc(count);
    for (std::size_t k = 0; k < count; ++k) inc[k] = p[k + 1] - p[k];
    const auto m = moments(inc);
    CHECK(std::abs(m.var / s2 - 1.0) < 0.01);
    // Normality: skewness sd sqrt(6/n), excess kurtosis sd sqrt(24/n).
    CHECK(std::abs(m.skew) < 3 * std::sqrt(6.0 / count));
    CHECK(std::abs(m.kurt) < 3 * std::sqrt(24.0 / count));
  }
  SUBCASE("random-walk spread grows linearly") {
    const double s2 = 1.18e-4;
    const std::size_t k = 1u << 15;
    std::vector<double> end(100);
    for (std::uint64_t r = 0; r < 100; ++r) {
      const auto p = phase_path(s2, k + 1, 1000 + r, 0.0);
      end[r] = p[k] - p[0];
    }
    double ss = 0;
    for (double e : end) ss += e * e;
    const double var = ss / 100.0;
    CAPTURE(var / (k * s2));
    CHECK(std::abs(var / (k * s2) - 1.0) < 0.05);
  }
}

TEST_CASE("transmit") {
  const auto c = shape_for_entropy(Constellation::qam(64), 5.0).constellation;
  SUBCASE("noise off and no phase noise gives y = x") {
    ChannelParams p;
    p.snr_db = kNoiseOff;
    p.sigma_theta_sq = 0.0;
    p.num_symbols = 4096;
    p.seed = 9;
    const auto t = transmit(c, p);
    CHECK(t.sigma_n_sq == 0.0);
    for (std::size_t k = 0; k < t.size(); ++k) CHECK(t.rx_symbols[k] == t.tx_symbols[k]);
  }
  SUBCASE("constant phase is recovered by a moment estimator") {
    ChannelParams p;
    p.snr_db = 20;
    p.phi0 = 0.3;
    p.num_symbols = 1u << 15;
    p.seed = 1;
    const auto t = transmit(c, p);
    cplx acc = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      acc += t.rx_symbols[k] * std::conj(t.tx_symbols[k]) / std::norm(t.tx_symbols[k]);
    }
    CHECK(std::abs(std::arg(acc) - 0.3) < 0.01);
  }
  SUBCASE("noise power, circularity and sequence lengths") {
    ChannelParams p;
    p.snr_db = 15;
    p.sigma_theta_sq = 1e-4;
    p.num_symbols = 1u << 15;
    p.seed = 2;
    const auto t = transmit(c, p);
    CHECK(t.tx_symbols.size() == p.num_symbols);
    CHECK(t.phase_path.size() == p.num_symbols);
    CHECK(t.bits.size() == p.num_symbols * 6);
    double power = 0;
    cplx second = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const cplx n = t.rx_symbols[k] - t.tx_symbols[k] * std::polar(1.0, t.phase_path[k]);
      power += std::norm(n);
      second += n * n;
      CHECK(std::isfinite(t.rx_symbols[k].real()));
    }
    const double kk = static_cast<double>(t.size());
    CHECK(std::abs(power / kk / t.sigma_n_sq - 1.0) < 0.02);
    // E[n^2] = 0; its sample mean has sd about sigma_n^2 / sqrt(K).
    CHECK(std::abs(second) / kk < 4 * t.sigma_n_sq / std::sqrt(kk));
  }
  SUBCASE("reproducible under a seed") {
    ChannelParams p;
    p.sigma_theta_sq = 1e-4;
    p.num_symbols = 2048;
    p.seed = 77;
    const auto a = transmit(c, p);
    const auto b = transmit(c, p);
    CHECK(a.rx_symbols == b.rx_symbols);
    CHECK(a.bits == b.bits);
    p.seed = 78;
    CHECK(transmit(c, p).rx_symbols != a.rx_symbols);
  }
  SUBCASE("uniform initial phase stays inside one symmetry sector") {
    ChannelParams p;
    p.initial_phase = InitialPhase::uniform;
    p.num_symbols = 8;
    for (std::uint64_t s = 0; s < 200; ++s) {
      p.seed = s;
      const double phi0 = transmit(c, p).phase_path[0];
      CHECK(phi0 >= -std::numbers::pi / 4);
      CHECK(phi0 < std::numbers::pi / 4);
    }
  }
  SUBCASE("trace csv has one row per symbol") {
    ChannelParams p;
    p.num_symbols = 5;
    std::ostringstream os;
    write_trace_csv(os, transmit(c, p));
    const auto text = os.str();
    CHECK(text.rfind("k,bits,x_re,x_im,phi,y_re,y_im\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  }
}
