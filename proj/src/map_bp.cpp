// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

// Sum-product on the chain factor graph of the discretized phase posterior.
//
// Messages and factors live in the log domain. The transition product
// log sum_b exp(logQ[a][b] + v[b]) is evaluated as
// vmax + log(sum_b Q[a][b] exp(v[b] - vmax)) with a precomputed linear copy of
// Q; a row whose linear sum underflows is recomputed with a full log-sum-exp,
// so the result is the log-domain value either way.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "estimators.hpp"
#include "logsumexp.hpp"

namespace cpekit {

namespace {

constexpr double kLinearFloor = 1e-280;

class TransitionKernel {
 public:
  explicit TransitionKernel(const Matrix& log_q)
      : log_q_(log_q), lin_(log_q.rows(), log_q.cols()), ev_(log_q.cols()), fallback_(log_q.cols()) {
    if (log_q.rows() != log_q.cols()) throw std::invalid_argument("transition matrix must be square");
    for (std::size_t a = 0; a < log_q.rows(); ++a) {
      for (std::size_t b = 0; b < log_q.cols(); ++b) {
        const double v = std::exp(log_q(a, b));
        lin_(a, b) = v < 1e-300 ? 0.0 : v;
      }
    }
  }

  // out[a] = log sum_b Q[a][b] exp(v[b]), then shifted so max(out) == 0.
  void apply(std::span<const double> v, std::span<double> out) {
    const std::size_t m = v.size();
    const double vmax = *std::max_element(v.begin(), v.end());
    for (std::size_t b = 0; b < m; ++b) {
      const double e = std::exp(v[b] - vmax);
      ev_[b] = e < 1e-300 ? 0.0 : e;
    }
    double omax = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < m; ++a) {
      const double* q = lin_.row(a).data();
      double s = 0.0;
      for (std::size_t b = 0; b < m; ++b) s += q[b] * ev_[b];
      double r;
      if (s > kLinearFloor) {
        r = vmax + std::log(s);
      } else {
        const auto lq = log_q_.row(a);
        for (std::size_t b = 0; b < m; ++b) fallback_[b] = lq[b] + v[b];
        r = log_sum_exp(fallback_);
      }
      out[a] = r;
      omax = std::max(omax, r);
    }
    for (auto& o : out) o -= omax;
  }

 private:
  const Matrix& log_q_;
  Matrix lin_;
  std::vector<double> ev_;
  std::vector<double> fallback_;
};

void normalize_log(std::span<double> v) {
  const double z = log_sum_exp(v);
  for (auto& x : v) x -= z;
}

class WindowedBp {
 public:
  WindowedBp(const Matrix& log_r, const Matrix& log_q)
      : log_r_(log_r), kernel_(log_q), tmp_(log_q.rows()), minus_(log_q.rows()), plus_(log_q.rows()) {
    if (log_r.cols() != log_q.rows()) throw std::invalid_argument("R and Q tables disagree on M");
  }

  // Normalized log-belief of symbol k.
  std::vector<double> belief(std::size_t k, int half_window) {
    const std::size_t count = log_r_.rows();
    const auto n = static_cast<std::size_t>(half_window);
    const std::size_t lo = k >= n ? k - n : 0;
    const std::size_t hi = std::min(count - 1, k + n);

    std::fill(minus_.begin(), minus_.end(), 0.0);
    for (std::size_t i = lo; i < k; ++i) absorb(log_r_.row(i), minus_);
    std::fill(plus_.begin(), plus_.end(), 0.0);
    for (std::size_t i = hi; i > k; --i) absorb(log_r_.row(i), plus_);

    std::vector<double> b(minus_.size());
    const auto rk = log_r_.row(k);
    for (std::size_t m = 0; m < b.size(); ++m) b[m] = minus_[m] + rk[m] + plus_[m];
    normalize_log(b);
    return b;
  }

 private:
  // msg <- Q (msg (.) R_i)
  void absorb(std::span<const double> log_ri, std::vector<double>& msg) {
    for (std::size_t m = 0; m < msg.size(); ++m) tmp_[m] = msg[m] + log_ri[m];
    kernel_.apply(tmp_, msg);
  }

  const Matrix& log_r_;
  TransitionKernel kernel_;
  std::vector<double> tmp_;
  std::vector<double> minus_;
  std::vector<double> plus_;
};

}  // namespace

std::vector<double> map_bp_marginal(const Matrix& log_r, const Matrix& log_q, std::size_t k,
                                    int half_window) {
  if (k >= log_r.rows()) throw std::out_of_range("symbol index out of range");
  WindowedBp bp(log_r, log_q);
  return bp.belief(k, half_window);
}

Matrix map_bp_forward_backward(const Matrix& log_r, const Matrix& log_q) {
  const std::size_t count = log_r.rows();
  const std::size_t m_count = log_q.rows();
  if (log_r.cols() != m_count) throw std::invalid_argument("R and Q tables disagree on M");
  TransitionKernel kernel(log_q);
  Matrix fwd(count, m_count, 0.0);
  Matrix bwd(count, m_count, 0.0);
  std::vector<double> tmp(m_count);
  for (std::size_t k = 1; k < count; ++k) {
    const auto prev = fwd.row(k - 1);
    const auto r = log_r.row(k - 1);
    for (std::size_t m = 0; m < m_count; ++m) tmp[m] = prev[m] + r[m];
    kernel.apply(tmp, fwd.row(k));
  }
  for (std::size_t k = count - 1; k-- > 0;) {
    const auto next = bwd.row(k + 1);
    const auto r = log_r.row(k + 1);
    for (std::size_t m = 0; m < m_count; ++m) tmp[m] = next[m] + r[m];
    kernel.apply(tmp, bwd.row(k));
  }
  Matrix belief(count, m_count);
  for (std::size_t k = 0; k < count; ++k) {
    auto b = belief.row(k);
    for (std::size_t m = 0; m < m_count; ++m) b[m] = fwd(k, m) + log_r(k, m) + bwd(k, m);
    normalize_log(b);
  }
  return belief;
}

std::vector<double> map_bp_estimate(std::span<const cplx> y, const EstimatorConfig& cfg,
                                    const Constellation& c) {
  if (cfg.half_window < 0) throw std::invalid_argument("half window must be >= 0");
  if (y.size() < 2 * static_cast<std::size_t>(cfg.half_window) + 1) {
    throw std::invalid_argument("sequence is shorter than the window 2N+1");
  }
  const Matrix log_r = r_table(y, cfg.grid, c, cfg.sigma_n_sq);
  const Matrix log_q = q_matrix(cfg.grid, cfg.sigma_theta_sq, cfg.wrap_terms);
  std::vector<double> out(y.size());
  if (cfg.full_sequence_bp) {
    const Matrix belief = map_bp_forward_backward(log_r, log_q);
    for (std::size_t k = 0; k < y.size(); ++k) out[k] = cfg.grid.phases[argmax(belief.row(k))];
    return out;
  }
  WindowedBp bp(log_r, log_q);
  for (std::size_t k = 0; k < y.size(); ++k) {
    out[k] = cfg.grid.phases[argmax(bp.belief(k, cfg.half_window))];
  }
  return out;
}

BruteForceResult brute_force_map(std::span<const cplx> y_window, const EstimatorConfig& cfg,
                                 const Constellation& c) {
  const std::size_t len = 2 * static_cast<std::size_t>(cfg.half_window) + 1;
  if (y_window.size() != len) {
    throw std::invalid_argument("brute-force window must hold exactly 2N+1 symbols");
  }
  const std::size_t m_count = cfg.grid.size();
  double tuples = 1.0;
  for (std::size_t i = 0; i < len; ++i) tuples *= static_cast<double>(m_count);
  if (tuples > 1e7) {
    throw std::invalid_argument("brute-force enumeration of " + std::to_string(tuples) +
                                " phase tuples exceeds the 1e7 guard");
  }
  const Matrix log_r = r_table(y_window, cfg.grid, c, cfg.sigma_n_sq);
  const Matrix log_q = q_matrix(cfg.grid, cfg.sigma_theta_sq, cfg.wrap_terms);
  const std::size_t center = len / 2;

  std::vector<std::size_t> idx(len, 0);
  auto log_weight = [&] {
    double w = log_r(0, idx[0]);
    for (std::size_t i = 1; i < len; ++i) w += log_r(i, idx[i]) + log_q(idx[i], idx[i - 1]);
    return w;
  };
  auto next = [&] {
    for (std::size_t i = 0; i < len; ++i) {
      if (++idx[i] < m_count) return true;
      idx[i] = 0;
    }
    return false;
  };

  // Pass 1: per-center maximum so every center value is summed at its own scale.
  std::vector<double> peak(m_count, -std::numeric_limits<double>::infinity());
  do {
    peak[idx[center]] = std::max(peak[idx[center]], log_weight());
  } while (next());

  std::vector<long double> sum(m_count, 0.0L);
  std::fill(idx.begin(), idx.end(), 0);
  do {
    const std::size_t cidx = idx[center];
    sum[cidx] += std::exp(static_cast<long double>(log_weight() - peak[cidx]));
  } while (next());

  BruteForceResult res;
  res.log_marginal.resize(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    res.log_marginal[m] = peak[m] + static_cast<double>(std::log(sum[m]));
  }
  normalize_log(res.log_marginal);
  res.argmax_index = argmax(res.log_marginal);
  res.phase = cfg.grid.phases[res.argmax_index];
  return res;
}

}  // namespace cpekit
