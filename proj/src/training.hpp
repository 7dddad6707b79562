// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "channel.hpp"
#include "estimators.hpp"

namespace cpekit {

enum class LossKind {
  bit_cross_entropy,  // BMI-aligned, default
  phase_mse,          // |e^{j n phi_hat} - e^{j n phi}|^2 / n^2
};

struct LossOptions {
  LossKind kind = LossKind::bit_cross_entropy;
  /// Demapper variance inside the loss (metric exp(-|x_hat - x|^2 / sigma^2)).
  double demap_sigma_sq = 0.01;
};

/// One training batch: received symbols with the references the loss needs.
struct Batch {
  std::span<const cplx> y;
  std::span<const double> phi_true;
  std::span<const std::uint8_t> bits;
};

Batch batch_of(const ChannelTrace& trace);

struct LossGrad {
  double loss = 0.0;               // mean over scored symbols, nats per symbol
  std::vector<double> grad_raw_w;  // d loss / d raw_weights
  double grad_raw_temp = 0.0;
  std::size_t scored = 0;
  std::size_t readout_fallbacks = 0;  // symbols whose softmin readout vanished
};

/// Loss over the interior symbols N <= k < K - N of the batch. Phase estimates
/// follow the weighted softmin BPS; the derotation phase is the estimate moved
/// by whole periods 2 pi / n to the copy nearest the true phase.
double loss(const BpsOptParams& params, const Batch& batch, const EstimatorConfig& cfg,
            const Constellation& c, const LossOptions& opts = {});

/// Loss and its exact reverse-mode gradient. The inner min over symbols in the
/// distances and the period rounding are treated as constants.
LossGrad loss_and_grad(const BpsOptParams& params, const Batch& batch, const EstimatorConfig& cfg,
                       const Constellation& c, const LossOptions& opts = {},
                       std::size_t workers = 1);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr);

struct TrainSchedule {
  int epochs = 100;
  double lr = 1e-3;
  int batches_start = 10;
  int batches_end = 100;
  std::size_t batch_symbols_start = 1u << 12;
  std::size_t batch_symbols_end = 1u << 17;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  double init_temperature = 0.1;
  LossKind loss = LossKind::bit_cross_entropy;
  /// Held-out trace scored once per epoch; 0 disables validation.
  std::size_t validation_symbols = 1u << 12;
  std::uint64_t validation_seed = 0x5eed'0000'0001ull;
  std::size_t workers = 1;

  /// Linear ramp of the batch count and of log2(batch symbols), rounded.
  int batches_at(int epoch) const;
  std::size_t batch_symbols_at(int epoch) const;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainSchedule from_json(const nlohmann::json& doc);
};

struct TrainReport {
  BpsOptParams params;
  BpsOptParams initial_params;
  std::vector<double> loss_curve;
  std::vector<double> validation_bmi;
  ChannelParams channel;
  TrainSchedule schedule;
  int half_window = 0;
  int m_count = 0;
  std::int64_t steps = 0;
  bool diverged = false;

  nlohmann::json to_json() const;
};

/// Online training against freshly simulated batches. Deterministic for a
/// fixed schedule seed.
TrainReport train(const TrainSchedule& schedule, const ChannelParams& channel,
                  const EstimatorConfig& cfg, const Constellation& c);

nlohmann::json params_to_json(const BpsOptParams& p);
BpsOptParams params_from_json(const nlohmann::json& doc);

/// Columns: offset,weight with offset = i - k in [-N, N].
void write_weights_csv(std::ostream& os, const BpsOptParams& p);

}  // namespace cpekit
