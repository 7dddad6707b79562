// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <numbers>
#include <stdexcept>

namespace cpekit {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Per-symbol distances |x_hat_k - x|^2 shared by every variance candidate.
class Demapper {
 public:
  Demapper(std::span<const cplx> x_hat, const Constellation& c)
      : c_(c), count_(x_hat.size()), dist_(x_hat.size(), c.size()), log_prior_(c.size()),
        bits_(c.size() * c.bits_per_symbol()) {
    for (std::size_t k = 0; k < count_; ++k) {
      for (std::size_t x = 0; x < c.size(); ++x) dist_(k, x) = std::norm(x_hat[k] - c.points()[x]);
    }
    const int m = c.bits_per_symbol();
    for (std::size_t x = 0; x < c.size(); ++x) {
      log_prior_[x] = std::log(c.probs()[x]);
      for (int b = 0; b < m; ++b) bits_[x * m + b] = static_cast<std::uint8_t>(c.bit(x, b));
    }
  }

  // Writes the m LLRs of symbol k.
  void symbol_llrs(std::size_t k, double sigma_sq, double clamp, std::span<double> out) const {
    const std::size_t num_pts = c_.size();
    const int m = c_.bits_per_symbol();
    const auto d = dist_.row(k);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < num_pts; ++x) {
      scratch_[x] = log_prior_[x] - d[x] / sigma_sq;
      mx = std::max(mx, scratch_[x]);
    }
    std::fill(out.begin(), out.end(), 0.0);
    std::fill(zero_.begin(), zero_.end(), 0.0);
    std::fill(one_.begin(), one_.end(), 0.0);
    for (std::size_t x = 0; x < num_pts; ++x) {
      double e = std::exp(scratch_[x] - mx);
      if (e < 1e-300) e = 0.0;
      for (int b = 0; b < m; ++b) {
        if (bits_[x * m + b]) {
          one_[b] += e;
        } else {
          zero_[b] += e;
        }
      }
    }
    // One of the two sums holds the maximum term (>= 1); an underflowed
    // partner means |L| > 700, far beyond any useful clamp.
    for (int b = 0; b < m; ++b) {
      double l;
      if (zero_[b] == 0.0) {
        l = -clamp;
      } else if (one_[b] == 0.0) {
        l = clamp;
      } else {
        l = std::clamp(std::log(zero_[b]) - std::log(one_[b]), -clamp, clamp);
      }
      out[b] = l;
    }
  }

  double bmi(std::span<const std::uint8_t> bits, double sigma_sq, double clamp) const {
    const int m = c_.bits_per_symbol();
    std::vector<double> l(m);
    double loss = 0.0;
    for (std::size_t k = 0; k < count_; ++k) {
      symbol_llrs(k, sigma_sq, clamp, l);
      for (int b = 0; b < m; ++b) {
        const double s = bits[k * m + b] ? -1.0 : 1.0;
        loss += softplus(-s * l[b]);
      }
    }
    return entropy(c_) - loss / (static_cast<double>(count_) * std::numbers::ln2);
  }

  std::size_t count() const { return count_; }

 private:
  const Constellation& c_;
  std::size_t count_;
  Matrix dist_;
  std::vector<double> log_prior_;
  std::vector<std::uint8_t> bits_;
  mutable std::vector<double> scratch_ = std::vector<double>(c_.size());
  mutable std::vector<double> zero_ = std::vector<double>(c_.bits_per_symbol());
  mutable std::vector<double> one_ = std::vector<double>(c_.bits_per_symbol());
};

void check_frame(std::span<const cplx> x_hat, std::span<const std::uint8_t> bits,
                 const Constellation& c) {
  if (x_hat.empty()) throw std::invalid_argument("cannot score an empty frame");
  if (bits.size() != x_hat.size() * static_cast<std::size_t>(c.bits_per_symbol())) {
    throw std::invalid_argument("bit count does not match symbols x bits_per_symbol");
  }
}

BmiReport make_report(double raw, const Constellation& c, double sigma_sq, std::size_t count) {
  BmiReport r;
  r.raw_bmi_bits = raw;
  r.negative_clamped = raw < 0.0;
  r.bmi_bits = std::max(raw, 0.0);
  r.entropy_bits = entropy(c);
  r.demapper_sigma_sq = sigma_sq;
  r.num_symbols_scored = count;
  return r;
}

}  // namespace

nlohmann::json BmiReport::to_json() const {
  return {{"bmi_bits", bmi_bits},
          {"raw_bmi_bits", raw_bmi_bits},
          {"negative_clamped", negative_clamped},
          {"entropy_bits", entropy_bits},
          {"demapper_sigma_sq", demapper_sigma_sq},
          {"num_symbols_scored", num_symbols_scored},
          {"edge_excluded", edge_excluded},
          {"degenerate", degenerate}};
}

LlrFrame llrs(std::span<const cplx> x_hat, const Constellation& c, double sigma_demap_sq,
              double clamp) {
  if (!(sigma_demap_sq > 0.0)) throw std::invalid_argument("demapper variance must be > 0");
  if (!(clamp > 0.0)) throw std::invalid_argument("LLR clamp must be > 0");
  Demapper dm(x_hat, c);
  LlrFrame f;
  f.clamp = clamp;
  f.llrs = Matrix(x_hat.size(), c.bits_per_symbol());
  for (std::size_t k = 0; k < x_hat.size(); ++k) dm.symbol_llrs(k, sigma_demap_sq, clamp, f.llrs.row(k));
  return f;
}

double bmi(std::span<const std::uint8_t> bits, const LlrFrame& frame, const Constellation& c) {
  const std::size_t m = c.bits_per_symbol();
  if (frame.llrs.cols() != m || bits.size() != frame.llrs.rows() * m) {
    throw std::invalid_argument("LLR frame dimensions do not match the bits");
  }
  if (frame.llrs.rows() == 0) throw std::invalid_argument("cannot score an empty frame");
  double loss = 0.0;
  for (std::size_t k = 0; k < frame.llrs.rows(); ++k) {
    for (std::size_t b = 0; b < m; ++b) {
      const double s = bits[k * m + b] ? -1.0 : 1.0;
      loss += softplus(-s * frame.llrs(k, b));
    }
  }
  return entropy(c) - loss / (static_cast<double>(frame.llrs.rows()) * std::numbers::ln2);
}

BmiReport bmi_report(std::span<const cplx> x_hat, std::span<const std::uint8_t> bits,
                     const Constellation& c, double sigma_demap_sq) {
  check_frame(x_hat, bits, c);
  if (!(sigma_demap_sq > 0.0)) throw std::invalid_argument("demapper variance must be > 0");
  Demapper dm(x_hat, c);
  return make_report(dm.bmi(bits, sigma_demap_sq, kDefaultLlrClamp), c, sigma_demap_sq,
                     x_hat.size());
}

namespace {

template <typename Objective>
std::pair<double, double> golden_section_log_variance(Objective objective) {
  constexpr double kTol = 1e-4;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(1e-6);
  double b = std::log(10.0);
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (b - a > kTol) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = objective(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = objective(x2);
    }
  }
  return f1 >= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

bool all_identical(std::span<const cplx> x_hat) {
  return std::all_of(x_hat.begin(), x_hat.end(), [&](const cplx& v) { return v == x_hat[0]; });
}

}  // namespace

BmiReport optimize_demapper_variance(std::span<const cplx> x_hat,
                                     std::span<const std::uint8_t> bits, const Constellation& c) {
  check_frame(x_hat, bits, c);
  Demapper dm(x_hat, c);
  const auto [best_log, best] = golden_section_log_variance(
      [&](double u) { return dm.bmi(bits, std::exp(u), kDefaultLlrClamp); });
  BmiReport r = make_report(best, c, std::exp(best_log), x_hat.size());
  r.degenerate = all_identical(x_hat);
  return r;
}

BmiReport optimize_demapper_variance_shared(std::span<const std::span<const cplx>> x_hat,
                                            std::span<const std::span<const std::uint8_t>> bits,
                                            const Constellation& c) {
  if (x_hat.empty() || x_hat.size() != bits.size()) {
    throw std::invalid_argument("need one bit frame per symbol frame");
  }
  std::vector<Demapper> dms;
  dms.reserve(x_hat.size());
  std::size_t total = 0;
  bool degenerate = true;
  for (std::size_t i = 0; i < x_hat.size(); ++i) {
    check_frame(x_hat[i], bits[i], c);
    dms.emplace_back(x_hat[i], c);
    total += x_hat[i].size();
    degenerate = degenerate && all_identical(x_hat[i]);
  }
  const auto [best_log, best] = golden_section_log_variance([&](double u) {
    double sum = 0.0;
    for (std::size_t i = 0; i < dms.size(); ++i) sum += dms[i].bmi(bits[i], std::exp(u), kDefaultLlrClamp);
    return sum / static_cast<double>(dms.size());
  });
  BmiReport r = make_report(best, c, std::exp(best_log), total);
  r.degenerate = degenerate;
  return r;
}

}  // namespace cpekit
