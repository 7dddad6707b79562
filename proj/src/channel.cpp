// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include "channel.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "format.hpp"
#include "rng.hpp"

namespace cpekit {

std::vector<double> phase_path(double sigma_theta_sq, std::size_t count, std::uint64_t seed,
                               double phi0) {
  if (!(sigma_theta_sq >= 0.0)) throw std::invalid_argument("sigma_theta_sq must be >= 0");
  if (count == 0) throw std::invalid_argument("phase path length must be >= 1");
  std::vector<double> path(count);
  path[0] = phi0;
  if (sigma_theta_sq == 0.0) {
    std::fill(path.begin(), path.end(), phi0);
    return path;
  }
  Rng rng(seed, stream::kPhase);
  const double sd = std::sqrt(sigma_theta_sq);
  for (std::size_t k = 1; k < count; ++k) path[k] = path[k - 1] + sd * rng.gaussian();
  return path;
}

double snr_to_noise_var(double snr_db, const Constellation& c) {
  if (std::abs(c.average_energy() - 1.0) > 1e-9) {
    throw std::invalid_argument("constellation must have unit average energy");
  }
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

ChannelTrace transmit(const Constellation& c, const ChannelParams& params) {
  if (params.num_symbols == 0) throw std::invalid_argument("num_symbols must be >= 1");
  if (!(params.sigma_theta_sq >= 0.0)) throw std::invalid_argument("sigma_theta_sq must be >= 0");

  ChannelTrace t;
  t.params = params;
  t.sigma_n_sq = snr_to_noise_var(params.snr_db, c);
  t.bits_per_symbol = c.bits_per_symbol();

  auto stream = sample(c, params.num_symbols, params.seed);
  t.bits = std::move(stream.bits);
  t.tx_indices = std::move(stream.indices);
  t.tx_symbols = std::move(stream.symbols);

  double phi0 = params.phi0;
  if (params.initial_phase == InitialPhase::uniform) {
    Rng rng(params.seed, stream::kInitialPhase);
    const double half = std::numbers::pi / c.sym_order();
    phi0 = -half + 2.0 * half * rng.uniform();
  }
  t.params.phi0 = phi0;
  t.phase_path = phase_path(params.sigma_theta_sq, params.num_symbols, params.seed, phi0);

  t.rx_symbols.resize(params.num_symbols);
  Rng noise(params.seed, stream::kNoise);
  const double sd = std::sqrt(t.sigma_n_sq / 2.0);
  for (std::size_t k = 0; k < params.num_symbols; ++k) {
    cplx y = t.tx_symbols[k] * std::polar(1.0, t.phase_path[k]);
    if (sd > 0.0) {
      const double re = noise.gaussian();
      const double im = noise.gaussian();
      y += cplx(sd * re, sd * im);
    }
    t.rx_symbols[k] = y;
  }
  return t;
}

void write_trace_csv(std::ostream& os, const ChannelTrace& trace) {
  os << "k,bits,x_re,x_im,phi,y_re,y_im\n";
  const int m = trace.bits_per_symbol;
  std::string bits(m, '0');
  for (std::size_t k = 0; k < trace.size(); ++k) {
    for (int b = 0; b < m; ++b) bits[b] = trace.bits[k * m + b] ? '1' : '0';
    os << k << ',' << bits << ',' << fmt_double(trace.tx_symbols[k].real()) << ','
       << fmt_double(trace.tx_symbols[k].imag()) << ',' << fmt_double(trace.phase_path[k]) << ','
       << fmt_double(trace.rx_symbols[k].real()) << ',' << fmt_double(trace.rx_symbols[k].imag())
       << '\n';
  }
}

}  // namespace cpekit
