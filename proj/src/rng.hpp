// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <cstdint>
#include <random>

namespace cpekit {

/// Seeded random source used by every simulation component.
///
/// Engine is std::mt19937_64 seeded through std::seed_seq{seed, stream}, both
/// fully specified by the standard, so a (seed, stream) pair yields the same
/// sequence on every conforming platform. Distributions are implemented here
/// rather than taken from <random> because the library distributions are
/// implementation-defined:
///   - uniform(): top 53 bits of one engine output scaled to [0, 1).
///   - gaussian(): Marsaglia polar method, second variate cached.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);

  double uniform();
  double gaussian();

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Independent substreams of one trace seed.
namespace stream {
inline constexpr std::uint64_t kSymbols = 1;
inline constexpr std::uint64_t kPhase = 2;
inline constexpr std::uint64_t kNoise = 3;
inline constexpr std::uint64_t kInitialPhase = 4;
}  // namespace stream

}  // namespace cpekit
