// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "constellation.hpp"

namespace cpekit {

enum class InitialPhase {
  fixed,    // phi_0 = ChannelParams::phi0
  uniform,  // phi_0 ~ U[-pi/n, pi/n)
};

struct ChannelParams {
  double snr_db = 20.0;  // Es/N0 with Es = 1; +inf disables the AWGN
  double sigma_theta_sq = 0.0;
  std::size_t num_symbols = 1u << 15;
  std::uint64_t seed = 0;
  double phi0 = 0.0;
  InitialPhase initial_phase = InitialPhase::fixed;
};

inline constexpr double kNoiseOff = std::numeric_limits<double>::infinity();

struct ChannelTrace {
  std::vector<std::uint8_t> bits;  // num_symbols x m
  std::vector<std::uint32_t> tx_indices;
  std::vector<cplx> tx_symbols;
  std::vector<double> phase_path;  // true, unwrapped
  std::vector<cplx> rx_symbols;
  ChannelParams params;
  double sigma_n_sq = 0.0;
  int bits_per_symbol = 0;

  std::size_t size() const { return rx_symbols.size(); }
};

/// Wiener phase random walk: path[0] = phi0, path[k] = path[k-1] + theta_k with
/// theta_k ~ N(0, sigma_theta_sq).
std::vector<double> phase_path(double sigma_theta_sq, std::size_t count, std::uint64_t seed,
                               double phi0);

/// Total complex noise variance for a unit-energy constellation: 10^(-snr_db/10).
double snr_to_noise_var(double snr_db, const Constellation& c);

/// y_k = x_k exp(j phi_k) + n_k with n_k ~ CN(0, sigma_n_sq).
ChannelTrace transmit(const Constellation& c, const ChannelParams& params);

/// Columns: k,bits,x_re,x_im,phi,y_re,y_im. Bits are written as a 0/1 string.
void write_trace_csv(std::ostream& os, const ChannelTrace& trace);

}  // namespace cpekit
