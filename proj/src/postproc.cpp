// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include "postproc.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "format.hpp"

namespace cpekit {

namespace {

double period_of(int sym_order) {
  if (sym_order < 1) throw std::invalid_argument("symmetry order must be >= 1");
  return 2.0 * std::numbers::pi / sym_order;
}

}  // namespace

std::vector<double> unwrap(std::span<const double> phi_raw, int sym_order) {
  const double period = period_of(sym_order);
  std::vector<double> out(phi_raw.begin(), phi_raw.end());
  double offset = 0.0;
  for (std::size_t k = 1; k < out.size(); ++k) {
    const double step = phi_raw[k] - phi_raw[k - 1];
    // Nearest continuation; a step of exactly +period/2 is kept.
    offset -= period * std::ceil(step / period - 0.5);
    out[k] = phi_raw[k] + offset;
  }
  return out;
}

SlipCorrection cycle_slip_correct(std::span<const double> phi_unwrapped,
                                  std::span<const double> phi_true, int sym_order) {
  if (phi_unwrapped.size() != phi_true.size()) {
    throw std::invalid_argument("estimated and true phase sequences differ in length");
  }
  const double period = period_of(sym_order);
  SlipCorrection out;
  out.corrected.resize(phi_unwrapped.size());
  std::int64_t prev = 0;
  for (std::size_t k = 0; k < phi_unwrapped.size(); ++k) {
    const auto q =
        static_cast<std::int64_t>(std::floor((phi_unwrapped[k] - phi_true[k]) / period + 0.5));
    out.corrected[k] = phi_unwrapped[k] - static_cast<double>(q) * period;
    if (k > 0 && q != prev) out.events.push_back({k, q});
    prev = q;
  }
  return out;
}

std::vector<cplx> derotate(std::span<const cplx> y, std::span<const double> phi) {
  if (y.size() != phi.size()) throw std::invalid_argument("symbol and phase sequences differ in length");
  std::vector<cplx> out(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) out[k] = y[k] * std::polar(1.0, -phi[k]);
  return out;
}

CorrectedTrace correct_phase(std::span<const cplx> y, std::span<const double> phi_raw,
                             std::span<const double> phi_true, int sym_order) {
  CorrectedTrace t;
  t.phi_hat_unwrapped = unwrap(phi_raw, sym_order);
  auto slip = cycle_slip_correct(t.phi_hat_unwrapped, phi_true, sym_order);
  t.phi_hat_corrected = std::move(slip.corrected);
  t.slip_events = std::move(slip.events);
  t.x_hat = derotate(y, t.phi_hat_corrected);
  return t;
}

void write_phase_csv(std::ostream& os, std::span<const double> phi_true,
                     std::span<const double> phi_raw, const CorrectedTrace& corrected) {
  os << "k,phi_true,phi_raw,phi_unwrapped,phi_corrected\n";
  for (std::size_t k = 0; k < phi_raw.size(); ++k) {
    os << k << ',' << fmt_double(phi_true[k]) << ',' << fmt_double(phi_raw[k]) << ','
       << fmt_double(corrected.phi_hat_unwrapped[k]) << ','
       << fmt_double(corrected.phi_hat_corrected[k]) << '\n';
  }
}

}  // namespace cpekit
