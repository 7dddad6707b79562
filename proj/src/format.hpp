// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#pragma once

#include <charconv>
#include <string>

namespace cpekit {

// Shortest decimal text that round-trips the value; locale independent.
inline std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace cpekit
