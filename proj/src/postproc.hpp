// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "constellation.hpp"

namespace cpekit {

struct SlipEvent {
  std::size_t index;
  std::int64_t multiple;  // offset in units of 2 pi / n applied from `index` on
};

struct CorrectedTrace {
  std::vector<double> phi_hat_unwrapped;
  std::vector<double> phi_hat_corrected;
  std::vector<cplx> x_hat;
  std::vector<SlipEvent> slip_events;
};

/// Successive differences folded into (-pi/n, pi/n] by multiples of 2 pi / n.
std::vector<double> unwrap(std::span<const double> phi_raw, int sym_order);

struct SlipCorrection {
  std::vector<double> corrected;
  std::vector<SlipEvent> events;
};

/// Data-aided: per symbol, remove round((u_k - phi_true_k) / (2 pi / n)) whole
/// periods. An event is logged wherever that integer changes.
SlipCorrection cycle_slip_correct(std::span<const double> phi_unwrapped,
                                  std::span<const double> phi_true, int sym_order);

/// y_k exp(-j phi_k).
std::vector<cplx> derotate(std::span<const cplx> y, std::span<const double> phi);

/// unwrap -> cycle_slip_correct -> derotate.
CorrectedTrace correct_phase(std::span<const cplx> y, std::span<const double> phi_raw,
                             std::span<const double> phi_true, int sym_order);

/// Columns: k,phi_true,phi_raw,phi_unwrapped,phi_corrected.
void write_phase_csv(std::ostream& os, std::span<const double> phi_true,
                     std::span<const double> phi_raw, const CorrectedTrace& corrected);

}  // namespace cpekit
