// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>

#include "estimators.hpp"
#include "logsumexp.hpp"

namespace cpekit {

double PhaseGrid::step() const {
  return 2.0 * std::numbers::pi / (static_cast<double>(sym_order) * static_cast<double>(size()));
}

PhaseGrid make_grid(int m_count, int sym_order) {
  if (m_count < 2) throw std::invalid_argument("phase grid needs M >= 2 test phases");
  if (sym_order < 1) throw std::invalid_argument("symmetry order must be >= 1");
  PhaseGrid g;
  g.sym_order = sym_order;
  g.phases.resize(m_count);
  const double n = sym_order;
  for (int i = 0; i < m_count; ++i) {
    // -pi/n + i 2pi/(nM) over a common denominator, exact at the center.
    g.phases[i] = std::numbers::pi * (2.0 * i - m_count) / (n * m_count);
  }
  return g;
}

EstimatorConfig EstimatorConfig::for_channel(int half_window, PhaseGrid grid,
                                             double channel_sigma_n_sq, double sigma_theta_sq) {
  EstimatorConfig cfg;
  cfg.half_window = half_window;
  cfg.grid = std::move(grid);
  cfg.sigma_n_sq = channel_sigma_n_sq / 2.0;
  cfg.sigma_theta_sq = sigma_theta_sq;
  return cfg;
}

Matrix r_table(std::span<const cplx> y, const PhaseGrid& grid, const Constellation& c,
               double sigma_n_sq) {
  if (!(sigma_n_sq > 0.0)) throw std::invalid_argument("sigma_n_sq must be > 0");
  const std::size_t num_pts = c.size();
  std::vector<double> log_prior(num_pts);
  for (std::size_t x = 0; x < num_pts; ++x) log_prior[x] = std::log(c.probs()[x]);

  std::vector<cplx> rot(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m) rot[m] = std::polar(1.0, -grid.phases[m]);

  const double inv = 1.0 / (2.0 * sigma_n_sq);
  Matrix out(y.size(), grid.size());
  std::vector<double> terms(num_pts);
  for (std::size_t k = 0; k < y.size(); ++k) {
    for (std::size_t m = 0; m < grid.size(); ++m) {
      const cplx yr = y[k] * rot[m];
      for (std::size_t x = 0; x < num_pts; ++x) {
        terms[x] = log_prior[x] - std::norm(yr - c.points()[x]) * inv;
      }
      out(k, m) = log_sum_exp(terms);
    }
  }
  return out;
}

int effective_wrap_terms(double sigma_theta_sq, int sym_order, int r_max) {
  const double sd = std::sqrt(std::max(sigma_theta_sq, 0.0));
  const int wide = static_cast<int>(std::ceil(5.0 * sd * sym_order / (2.0 * std::numbers::pi)));
  return std::max(r_max, wide);
}

Matrix q_matrix(const PhaseGrid& grid, double sigma_theta_sq, int r_max) {
  if (r_max < 1) throw std::invalid_argument("wrapped-normal truncation must be >= 1");
  if (!(sigma_theta_sq >= 0.0)) throw std::invalid_argument("sigma_theta_sq must be >= 0");
  constexpr double kFloor = 1e-12;
  const double var = std::max(sigma_theta_sq, kFloor);
  const int terms = effective_wrap_terms(var, grid.sym_order, r_max);
  const double period = 2.0 * std::numbers::pi / grid.sym_order;
  const std::size_t m_count = grid.size();

  // Circulant: only the wrapped index difference matters.
  std::vector<double> by_offset(m_count);
  std::vector<double> acc(2 * terms + 1);
  for (std::size_t d = 0; d < m_count; ++d) {
    const auto signed_d = 2 * d > m_count ? static_cast<double>(d) - static_cast<double>(m_count)
                                          : static_cast<double>(d);
    const double diff = signed_d * grid.step();
    for (int r = -terms; r <= terms; ++r) {
      const double a = diff + r * period;
      acc[r + terms] = -a * a / (2.0 * var);
    }
    by_offset[d] = log_sum_exp(acc);
  }
  const double norm = log_sum_exp(by_offset);

  Matrix q(m_count, m_count);
  for (std::size_t i = 0; i < m_count; ++i) {
    for (std::size_t j = 0; j < m_count; ++j) {
      q(i, j) = by_offset[(i + m_count - j) % m_count] - norm;
    }
  }
  return q;
}

namespace {

// Square lattice view of a QAM constellation: point index by (column, row).
// Nearest-point search then only needs the 3x3 neighbourhood of the rounded
// coordinates, evaluated with the same arithmetic as the full scan.
struct Lattice {
  int side = 0;
  double origin = 0.0;
  double step = 0.0;
  std::vector<std::size_t> index;  // row * side + column

  static std::optional<Lattice> of(const Constellation& c) {
    const auto pts = c.points();
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pts.size()))));
    if (side < 2 || static_cast<std::size_t>(side * side) != pts.size()) return std::nullopt;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& x : pts) {
      lo = std::min({lo, x.real(), x.imag()});
      hi = std::max({hi, x.real(), x.imag()});
    }
    Lattice l;
    l.side = side;
    l.origin = lo;
    l.step = (hi - lo) / (side - 1);
    l.index.assign(pts.size(), pts.size());
    const double tol = 1e-9 * l.step;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double fc = (pts[i].real() - lo) / l.step, fr = (pts[i].imag() - lo) / l.step;
      const long col = std::lround(fc), row = std::lround(fr);
      if (std::abs(fc - col) * l.step > tol || std::abs(fr - row) * l.step > tol) return std::nullopt;
      auto& slot = l.index[row * side + col];
      if (slot != pts.size()) return std::nullopt;
      slot = i;
    }
    return l;
  }

  int clamp_round(double v) const {
    const double f = std::round((v - origin) / step);
    return static_cast<int>(std::clamp(f, 0.0, static_cast<double>(side - 1)));
  }
};

}  // namespace

Matrix min_distances(std::span<const cplx> y, const PhaseGrid& grid, const Constellation& c) {
  std::vector<cplx> rot(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m) rot[m] = std::polar(1.0, -grid.phases[m]);
  Matrix d(y.size(), grid.size());
  const auto pts = c.points();
  const auto lattice = Lattice::of(c);
  for (std::size_t k = 0; k < y.size(); ++k) {
    for (std::size_t m = 0; m < grid.size(); ++m) {
      const cplx yr = y[k] * rot[m];
      double best = std::numeric_limits<double>::infinity();
      if (lattice) {
        const int col = lattice->clamp_round(yr.real()), row = lattice->clamp_round(yr.imag());
        for (int r = std::max(row - 1, 0); r <= std::min(row + 1, lattice->side - 1); ++r) {
          for (int q = std::max(col - 1, 0); q <= std::min(col + 1, lattice->side - 1); ++q) {
            best = std::min(best, std::norm(yr - pts[lattice->index[r * lattice->side + q]]));
          }
        }
      } else {
        for (const auto& x : pts) best = std::min(best, std::norm(yr - x));
      }
      d(k, m) = best;
    }
  }
  return d;
}

std::vector<double> softmin(std::span<const double> x, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("softmin temperature must be > 0");
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double mn = *std::min_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(-(x[i] - mn) / t);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

}  // namespace cpekit
