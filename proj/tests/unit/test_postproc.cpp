// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "postproc.hpp"

using namespace cpekit;
using std::numbers::pi;

namespace {

constexpr double kPeriod = pi / 2;

// Fold into [-pi/4, pi/4).
double wrap(double v) { return v - kPeriod * std::floor(v / kPeriod + 0.5); }

}  // namespace

TEST_CASE("unwrap") {
  SUBCASE("nearest continuation") {
    const std::vector<double> raw = {0.7, -0.7};
    const auto u = unwrap(raw, 4);
    CHECK(u[0] == 0.7);
    CHECK(u[1] == doctest::Approx(-0.7 + pi / 2).epsilon(1e-15));
    CHECK(u[1] == doctest::Approx(0.8708).epsilon(1e-4));
  }
  SUBCASE("constant input is unchanged") {
    const std::vector<double> raw(50, -0.3);
    CHECK(unwrap(raw, 4) == raw);
  }
  SUBCASE("smooth input is unchanged") {
    std::vector<double> raw(200);
    for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = 0.7 * std::sin(0.05 * k);
    CHECK(unwrap(raw, 4) == raw);
  }
  SUBCASE("steps are folded into (-P/2, P/2] and the wrap-back reproduces the input") {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(-pi / 4, pi / 4);
    std::vector<double> raw(5000);
    for (auto& v : raw) v = u(gen);
    const auto w = unwrap(raw, 4);
    for (std::size_t k = 1; k < raw.size(); ++k) {
      const double step = w[k] - w[k - 1];
      CHECK(step > -kPeriod / 2 - 1e-12);
      CHECK(step <= kPeriod / 2 + 1e-12);
      CHECK(std::abs(wrap(w[k]) - raw[k]) < 1e-12);
      const double q = (w[k] - raw[k]) / kPeriod;
      CHECK(std::abs(q - std::round(q)) < 1e-9);
    }
  }
  SUBCASE("tracks a drifting phase across many periods") {
    std::vector<double> truth(3000), raw(3000);
    for (std::size_t k = 0; k < truth.size(); ++k) {
      truth[k] = 0.01 * k;
      raw[k] = wrap(truth[k]);
    }
    const auto w = unwrap(raw, 4);
    for (std::size_t k = 0; k < truth.size(); ++k) CHECK(w[k] == doctest::Approx(truth[k]).epsilon(1e-9));
  }
}

TEST_CASE("cycle-slip correction") {
  std::vector<double> truth(300);
  for (std::size_t k = 0; k < truth.size(); ++k) truth[k] = 0.2 * std::sin(0.01 * k);
  SUBCASE("global offset of one period") {
    std::vector<double> u(truth);
    for (auto& v : u) v += pi / 2;
    const auto s = cycle_slip_correct(u, truth, 4);
    for (std::size_t k = 0; k < truth.size(); ++k) CHECK(std::abs(s.corrected[k] - truth[k]) < 1e-15);
    CHECK(s.events.empty());
  }
  SUBCASE("offset jumps at index 100") {
    std::vector<double> u(truth);
    for (std::size_t k = 100; k < u.size(); ++k) u[k] += kPeriod;
    const auto s = cycle_slip_correct(u, truth, 4);
    REQUIRE(s.events.size() == 1);
    CHECK(s.events[0].index == 100);
    CHECK(s.events[0].multiple == 1);
    for (std::size_t k = 0; k < truth.size(); ++k) CHECK(std::abs(s.corrected[k] - truth[k]) < pi / 4);
  }
  SUBCASE("identity") {
    const auto s = cycle_slip_correct(truth, truth, 4);
    CHECK(s.corrected == truth);
    CHECK(s.events.empty());
  }
  SUBCASE("residual always lies in [-pi/n, pi/n)") {
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> d(-20.0, 20.0);
    std::vector<double> u(truth.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = truth[k] + d(gen);
    const auto s = cycle_slip_correct(u, truth, 4);
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double r = s.corrected[k] - truth[k];
      CHECK(r >= -pi / 4 - 1e-12);
      CHECK(r < pi / 4 + 1e-12);
    }
  }
  SUBCASE("length mismatch") {
    const std::vector<double> shorter(10, 0.0);
    CHECK_THROWS_AS(cycle_slip_correct(shorter, truth, 4), std::invalid_argument);
  }
}

TEST_CASE("derotate") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n;
  std::vector<cplx> y(100);
  std::vector<double> phi(100);
  for (std::size_t k = 0; k < y.size(); ++k) {
    y[k] = {n(gen), n(gen)};
    phi[k] = n(gen);
  }
  SUBCASE("zero phase is the identity") {
    CHECK(derotate(y, std::vector<double>(100, 0.0)) == y);
  }
  SUBCASE("magnitude is preserved and the inverse rotation restores y") {
    const auto x = derotate(y, phi);
    std::vector<double> neg(phi);
    for (auto& v : neg) v = -v;
    const auto back = derotate(x, neg);
    for (std::size_t k = 0; k < y.size(); ++k) {
      CHECK(std::abs(std::abs(x[k]) - std::abs(y[k])) < 1e-15 * (1 + std::abs(y[k])));
      CHECK(std::abs(back[k] - y[k]) < 1e-15 * (1 + 2 * std::abs(y[k])));
    }
  }
  SUBCASE("true phase and no noise give the transmitted symbols") {
    std::vector<cplx> x(100), rx(100);
    for (std::size_t k = 0; k < 100; ++k) {
      x[k] = {(k % 3) - 1.0, (k % 5) * 0.25};
      rx[k] = x[k] * std::polar(1.0, phi[k]);
    }
    const auto back = derotate(rx, phi);
    for (std::size_t k = 0; k < 100; ++k) CHECK(std::abs(back[k] - x[k]) < 1e-15);
  }
}

TEST_CASE("correct_phase pipeline and csv") {
  std::vector<double> truth(64), raw(64);
  std::vector<cplx> y(64);
  for (std::size_t k = 0; k < 64; ++k) {
    truth[k] = 0.03 * k;
    raw[k] = wrap(truth[k] + 0.01);
    y[k] = std::polar(1.0, truth[k]);
  }
  const auto t = correct_phase(y, raw, truth, 4);
  for (std::size_t k = 0; k < 64; ++k) {
    CHECK(t.phi_hat_corrected[k] == doctest::Approx(truth[k] + 0.01).epsilon(1e-12));
    CHECK(std::abs(t.x_hat[k] - std::polar(1.0, -0.01)) < 1e-12);
  }
  CHECK(t.slip_events.empty());
  std::ostringstream os;
  write_phase_csv(os, truth, raw, t);
  const auto text = os.str();
  CHECK(text.rfind("k,phi_true,phi_raw,phi_unwrapped,phi_corrected\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 65);
}
