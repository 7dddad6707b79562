// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

#include "format.hpp"
#include "logsumexp.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "postproc.hpp"

namespace cpekit {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct Partial {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_t = 0.0;
  std::size_t fallbacks = 0;
};

// Forward (and optionally backward) pass of the weighted-softmin BPS ->
// derotation -> demapper -> loss pipeline for single symbols.
class Pipeline {
 public:
  Pipeline(const BpsOptParams& params, const Batch& batch, const EstimatorConfig& cfg,
           const Constellation& c, const LossOptions& opts, const Matrix& dist)
      : params_(params), batch_(batch), cfg_(cfg), c_(c), opts_(opts), dist_(dist),
        m_count_(cfg.grid.size()), nbits_(c.bits_per_symbol()), n_(cfg.grid.sym_order),
        period_(2.0 * std::numbers::pi / cfg.grid.sym_order), readout_(m_count_),
        log_prior_(c.size()), point_bits_(c.size() * nbits_), dsum_(m_count_), s_(m_count_),
        gu_(m_count_), a_(c.size()), e_(c.size()), lse0_(nbits_), lse1_(nbits_),
        gl_(nbits_), f0_(nbits_), f1_(nbits_), exact_(nbits_) {
    for (std::size_t m = 0; m < m_count_; ++m) readout_[m] = std::polar(1.0, n_ * cfg.grid.phases[m]);
    for (std::size_t x = 0; x < c.size(); ++x) {
      log_prior_[x] = std::log(c.probs()[x]);
      for (int b = 0; b < nbits_; ++b) point_bits_[x * nbits_ + b] = static_cast<std::uint8_t>(c.bit(x, b));
    }
  }

  void run(std::size_t k, bool want_grad, Partial& acc) {
    const auto w = params_.weights();
    const double t = params_.temperature();
    const auto nh = static_cast<std::size_t>(cfg_.half_window);

    std::fill(dsum_.begin(), dsum_.end(), 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const auto row = dist_.row(k - nh + j);
      const double wj = w[j];
      for (std::size_t m = 0; m < m_count_; ++m) dsum_[m] += wj * row[m];
    }
    const double dmin = *std::min_element(dsum_.begin(), dsum_.end());
    double total = 0.0;
    for (std::size_t m = 0; m < m_count_; ++m) {
      s_[m] = std::exp(-(dsum_[m] - dmin) / t);
      total += s_[m];
    }
    cplx z{0.0, 0.0};
    for (std::size_t m = 0; m < m_count_; ++m) {
      s_[m] /= total;
      z += s_[m] * readout_[m];
    }
    const bool fallback = std::abs(z) < 1e-12;
    double phi_hat;
    if (fallback) {
      phi_hat = cfg_.grid.phases[argmin(dsum_)];
      ++acc.fallbacks;
    } else {
      phi_hat = std::atan2(z.imag(), z.real()) / n_;
      if (phi_hat >= period_ / 2.0) phi_hat -= period_;
    }
    const double phi_true = batch_.phi_true[k];
    const double shift = period_ * std::floor((phi_true - phi_hat) / period_ + 0.5);
    const double psi = phi_hat + shift;

    double g_phi = 0.0;
    if (opts_.kind == LossKind::phase_mse) {
      const double e = n_ * (phi_hat - phi_true);
      acc.loss += (2.0 - 2.0 * std::cos(e)) / (n_ * n_);
      g_phi = 2.0 * std::sin(e) / n_;
    } else {
      acc.loss += demapper_loss(k, psi, want_grad, g_phi);
    }
    if (!want_grad || fallback) return;

    // phi_hat = arg(z) / n
    const double zz = std::norm(z);
    double sg = 0.0;
    for (std::size_t m = 0; m < m_count_; ++m) {
      const double gs = g_phi * (-z.imag() * readout_[m].real() + z.real() * readout_[m].imag()) / (n_ * zz);
      gu_[m] = gs;
      sg += s_[m] * gs;
    }
    double gt = 0.0;
    for (std::size_t m = 0; m < m_count_; ++m) {
      gu_[m] = s_[m] * (gu_[m] - sg);        // d/du, u = -D / t
      gt += gu_[m] * (dsum_[m] - dmin) / t;  // sum(gu) == 0, so the shift is free
      gu_[m] = -gu_[m] / t;                  // d/dD
    }
    acc.grad_t += gt;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const auto row = dist_.row(k - nh + j);
      double g = 0.0;
      for (std::size_t m = 0; m < m_count_; ++m) g += gu_[m] * row[m];
      acc.grad_w[j] += g;
    }
  }

 private:
  double demapper_loss(std::size_t k, double psi, bool want_grad, double& g_phi) {
    const cplx xh = batch_.y[k] * std::polar(1.0, -psi);
    const double sigma_sq = opts_.demap_sigma_sq;
    const std::size_t num_pts = c_.size();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < num_pts; ++x) {
      a_[x] = log_prior_[x] - std::norm(xh - c_.points()[x]) / sigma_sq;
      mx = std::max(mx, a_[x]);
    }
    for (std::size_t x = 0; x < num_pts; ++x) e_[x] = std::exp(a_[x] - mx);
    for (int b = 0; b < nbits_; ++b) {
      double z0 = 0.0, z1 = 0.0;
      for (std::size_t x = 0; x < num_pts; ++x) {
        (point_bits_[x * nbits_ + b] ? z1 : z0) += e_[x];
      }
      lse0_[b] = z0 > 1e-300 ? mx + std::log(z0) : subset_lse(b, 0);
      lse1_[b] = z1 > 1e-300 ? mx + std::log(z1) : subset_lse(b, 1);
    }
    double loss = 0.0;
    const std::uint8_t* bits = batch_.bits.data() + k * nbits_;
    for (int b = 0; b < nbits_; ++b) {
      const double l = lse0_[b] - lse1_[b];
      const double sgn = bits[b] ? -1.0 : 1.0;
      loss += softplus(-sgn * l);
      gl_[b] = -sgn * sigmoid(-sgn * l);
    }
    if (!want_grad) return loss;

    // exp(a_x - lse) = e_x exp(mx - lse) unless the subset sum underflowed.
    for (int b = 0; b < nbits_; ++b) {
      exact_[b] = lse0_[b] - mx < -600.0 || lse1_[b] - mx < -600.0;
      f0_[b] = exact_[b] ? 0.0 : gl_[b] * std::exp(mx - lse0_[b]);
      f1_[b] = exact_[b] ? 0.0 : -gl_[b] * std::exp(mx - lse1_[b]);
    }
    const bool any_exact = std::find(exact_.begin(), exact_.end(), true) != exact_.end();
    cplx g_xh{0.0, 0.0};
    for (std::size_t x = 0; x < num_pts; ++x) {
      double ga = 0.0;
      const std::uint8_t* pb = &point_bits_[x * nbits_];
      for (int b = 0; b < nbits_; ++b) ga += pb[b] ? f1_[b] * e_[x] : f0_[b] * e_[x];
      if (any_exact) {
        ga = 0.0;
        for (int b = 0; b < nbits_; ++b) {
          ga += pb[b] ? -gl_[b] * std::exp(a_[x] - lse1_[b]) : gl_[b] * std::exp(a_[x] - lse0_[b]);
        }
      }
      g_xh += ga * (-2.0 / sigma_sq) * (xh - c_.points()[x]);
    }
    // x_hat = y e^{-j psi}, d x_hat / d psi = -j x_hat
    g_phi = g_xh.real() * xh.imag() - g_xh.imag() * xh.real();
    return loss;
  }

  double subset_lse(int b, std::uint8_t value) const {
    std::vector<double> v;
    for (std::size_t x = 0; x < c_.size(); ++x) {
      if (point_bits_[x * nbits_ + b] == value) v.push_back(a_[x]);
    }
    return log_sum_exp(v);
  }

  const BpsOptParams& params_;
  const Batch& batch_;
  const EstimatorConfig& cfg_;
  const Constellation& c_;
  const LossOptions& opts_;
  const Matrix& dist_;
  std::size_t m_count_;
  int nbits_;
  double n_;
  double period_;
  std::vector<cplx> readout_;
  std::vector<double> log_prior_;
  std::vector<std::uint8_t> point_bits_;
  std::vector<double> dsum_, s_, gu_, a_, e_, lse0_, lse1_, gl_, f0_, f1_;
  std::vector<bool> exact_;
};

void check_inputs(const BpsOptParams& params, const Batch& batch, const EstimatorConfig& cfg,
                  const Constellation& c, const LossOptions& opts) {
  const std::size_t count = batch.y.size();
  if (batch.phi_true.size() != count ||
      batch.bits.size() != count * static_cast<std::size_t>(c.bits_per_symbol())) {
    throw std::invalid_argument("batch sequences disagree in length");
  }
  if (count < 2 * static_cast<std::size_t>(cfg.half_window) + 1) {
    throw std::invalid_argument("batch is shorter than the window 2N+1");
  }
  if (params.half_window() != cfg.half_window) {
    throw std::invalid_argument("weight vector length does not match 2N+1");
  }
  if (!(params.temperature() > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (!(opts.demap_sigma_sq > 0.0)) throw std::invalid_argument("demapper variance must be > 0");
}

// Fixed chunking so the reduction order does not depend on the worker count.
constexpr std::size_t kChunks = 16;

LossGrad evaluate(const BpsOptParams& params, const Batch& batch, const EstimatorConfig& cfg,
                  const Constellation& c, const LossOptions& opts, bool want_grad,
                  std::size_t workers) {
  check_inputs(params, batch, cfg, c, opts);
  const Matrix dist = min_distances(batch.y, cfg.grid, c);
  const auto nh = static_cast<std::size_t>(cfg.half_window);
  const std::size_t first = nh;
  const std::size_t last = batch.y.size() - nh;  // exclusive
  const std::size_t scored = last - first;
  const std::size_t nw = params.weights().size();

  std::vector<Partial> parts(kChunks);
  parallel_for(kChunks, workers, [&](std::size_t chunk) {
    Partial& p = parts[chunk];
    p.grad_w.assign(nw, 0.0);
    Pipeline pipe(params, batch, cfg, c, opts, dist);
    const std::size_t lo = first + scored * chunk / kChunks;
    const std::size_t hi = first + scored * (chunk + 1) / kChunks;
    for (std::size_t k = lo; k < hi; ++k) pipe.run(k, want_grad, p);
  });

  LossGrad out;
  out.scored = scored;
  std::vector<double> gw(nw, 0.0);
  for (const auto& p : parts) {
    out.loss += p.loss;
    out.grad_raw_temp += p.grad_t;
    out.readout_fallbacks += p.fallbacks;
    for (std::size_t j = 0; j < nw; ++j) gw[j] += p.grad_w[j];
  }
  const double inv = 1.0 / static_cast<double>(scored);
  out.loss *= inv;
  if (!std::isfinite(out.loss)) {
    throw std::runtime_error("non-finite loss (temperature " + fmt_double(params.temperature()) +
                             ", demapper variance " + fmt_double(opts.demap_sigma_sq) + ")");
  }
  if (!want_grad) return out;

  out.grad_raw_temp *= inv;
  // w = softmax(raw): d/draw_i = w_i (g_i - sum_j w_j g_j)
  const auto w = params.weights();
  double wg = 0.0;
  for (std::size_t j = 0; j < nw; ++j) wg += w[j] * gw[j] * inv;
  out.grad_raw_w.resize(nw);
  for (std::size_t j = 0; j < nw; ++j) out.grad_raw_w[j] = w[j] * (gw[j] * inv - wg);
  return out;
}

double lerp(double a, double b, double f) { return a + (b - a) * f; }

}  // namespace

Batch batch_of(const ChannelTrace& trace) {
  return {trace.rx_symbols, trace.phase_path, trace.bits};
}

double loss(const BpsOptParams& params, const Batch& batch, const EstimatorConfig& cfg,
            const Constellation& c, const LossOptions& opts) {
  return evaluate(params, batch, cfg, c, opts, false, 1).loss;
}

LossGrad loss_and_grad(const BpsOptParams& params, const Batch& batch, const EstimatorConfig& cfg,
                       const Constellation& c, const LossOptions& opts, std::size_t workers) {
  return evaluate(params, batch, cfg, c, opts, true, workers);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("Adam state, parameters and gradients differ in size");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

int TrainSchedule::batches_at(int epoch) const {
  const double f = epochs > 1 ? static_cast<double>(epoch) / (epochs - 1) : 0.0;
  return static_cast<int>(std::lround(lerp(batches_start, batches_end, f)));
}

std::size_t TrainSchedule::batch_symbols_at(int epoch) const {
  const double f = epochs > 1 ? static_cast<double>(epoch) / (epochs - 1) : 0.0;
  const double lg = lerp(std::log2(static_cast<double>(batch_symbols_start)),
                         std::log2(static_cast<double>(batch_symbols_end)), f);
  return static_cast<std::size_t>(std::llround(std::exp2(lg)));
}

void TrainSchedule::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (batches_start < 1 || batches_end < 1) throw std::invalid_argument("batch counts must be >= 1");
  if (batch_symbols_start < 1 || batch_symbols_end < 1) {
    throw std::invalid_argument("batch sizes must be >= 1");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 &&
        adam_eps > 0.0)) {
    throw std::invalid_argument("invalid Adam hyper-parameters");
  }
  if (!(init_temperature > 0.0)) throw std::invalid_argument("initial temperature must be > 0");
}

nlohmann::json TrainSchedule::to_json() const {
  return {{"epochs", epochs},
          {"lr", lr},
          {"batches_start", batches_start},
          {"batches_end", batches_end},
          {"batch_symbols_start", batch_symbols_start},
          {"batch_symbols_end", batch_symbols_end},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"seed", seed},
          {"init_temperature", init_temperature},
          {"loss", loss == LossKind::phase_mse ? "phase_mse" : "bit_cross_entropy"},
          {"validation_symbols", validation_symbols},
          {"validation_seed", validation_seed}};
}

TrainSchedule TrainSchedule::from_json(const nlohmann::json& doc) {
  TrainSchedule s;
  s.epochs = doc.value("epochs", s.epochs);
  s.lr = doc.value("lr", s.lr);
  s.batches_start = doc.value("batches_start", s.batches_start);
  s.batches_end = doc.value("batches_end", s.batches_end);
  s.batch_symbols_start = doc.value("batch_symbols_start", s.batch_symbols_start);
  s.batch_symbols_end = doc.value("batch_symbols_end", s.batch_symbols_end);
  s.adam_beta1 = doc.value("adam_beta1", s.adam_beta1);
  s.adam_beta2 = doc.value("adam_beta2", s.adam_beta2);
  s.adam_eps = doc.value("adam_eps", s.adam_eps);
  s.seed = doc.value("seed", s.seed);
  s.init_temperature = doc.value("init_temperature", s.init_temperature);
  const std::string loss = doc.value("loss", std::string("bit_cross_entropy"));
  if (loss == "phase_mse") {
    s.loss = LossKind::phase_mse;
  } else if (loss == "bit_cross_entropy") {
    s.loss = LossKind::bit_cross_entropy;
  } else {
    throw std::invalid_argument("unknown loss '" + loss + "'");
  }
  s.validation_symbols = doc.value("validation_symbols", s.validation_symbols);
  s.validation_seed = doc.value("validation_seed", s.validation_seed);
  return s;
}

nlohmann::json params_to_json(const BpsOptParams& p) {
  return {{"half_window", p.half_window()},
          {"weights", std::vector<double>(p.weights().begin(), p.weights().end())},
          {"temperature", p.temperature()},
          {"raw_weights", std::vector<double>(p.raw_weights().begin(), p.raw_weights().end())},
          {"raw_temp", p.raw_temp()}};
}

BpsOptParams params_from_json(const nlohmann::json& doc) {
  const auto& src = doc.contains("params") ? doc.at("params") : doc;
  if (src.contains("raw_weights") && src.contains("raw_temp")) {
    return BpsOptParams(src.at("raw_weights").get<std::vector<double>>(),
                        src.at("raw_temp").get<double>());
  }
  const auto w = src.at("weights").get<std::vector<double>>();
  return BpsOptParams::from_weights(w, src.at("temperature").get<double>());
}

nlohmann::json TrainReport::to_json() const {
  return {{"params", params_to_json(params)},
          {"initial_params", params_to_json(initial_params)},
          {"loss_curve", loss_curve},
          {"validation_bmi", validation_bmi},
          {"channel",
           {{"snr_db", channel.snr_db},
            {"sigma_theta_sq", channel.sigma_theta_sq},
            {"phi0", channel.phi0},
            {"initial_phase", channel.initial_phase == InitialPhase::uniform ? "uniform" : "fixed"}}},
          {"schedule", schedule.to_json()},
          {"N", half_window},
          {"M", m_count},
          {"steps", steps},
          {"diverged", diverged}};
}

void write_weights_csv(std::ostream& os, const BpsOptParams& p) {
  os << "offset,weight\n";
  const int n = p.half_window();
  const auto w = p.weights();
  for (int i = 0; i < static_cast<int>(w.size()); ++i) os << (i - n) << ',' << fmt_double(w[i]) << '\n';
}

TrainReport train(const TrainSchedule& schedule, const ChannelParams& channel,
                  const EstimatorConfig& cfg, const Constellation& c) {
  schedule.validate();
  TrainReport report;
  report.schedule = schedule;
  report.channel = channel;
  report.half_window = cfg.half_window;
  report.m_count = static_cast<int>(cfg.grid.size());
  report.initial_params = BpsOptParams::uniform(cfg.half_window, schedule.init_temperature);

  std::vector<double> theta(report.initial_params.raw_weights().begin(),
                            report.initial_params.raw_weights().end());
  theta.push_back(report.initial_params.raw_temp());
  const std::size_t nw = theta.size() - 1;
  auto current = [&] {
    return BpsOptParams(std::vector<double>(theta.begin(), theta.begin() + nw), theta.back());
  };

  AdamState adam(theta.size());
  adam.beta1 = schedule.adam_beta1;
  adam.beta2 = schedule.adam_beta2;
  adam.eps = schedule.adam_eps;

  LossOptions opts;
  opts.kind = schedule.loss;
  const double channel_var = snr_to_noise_var(channel.snr_db, c);
  opts.demap_sigma_sq = std::max(channel_var, 1e-6);

  ChannelTrace validation;
  if (schedule.validation_symbols > 0) {
    ChannelParams vp = channel;
    vp.num_symbols = std::max(schedule.validation_symbols, 2 * static_cast<std::size_t>(cfg.half_window) + 1);
    vp.seed = schedule.validation_seed;
    validation = transmit(c, vp);
  }

  std::vector<double> grads(theta.size());
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    const int batches = schedule.batches_at(epoch);
    const std::size_t size = std::max(schedule.batch_symbols_at(epoch),
                                      2 * static_cast<std::size_t>(cfg.half_window) + 1);
    double epoch_loss = 0.0;
    for (int b = 0; b < batches; ++b) {
      ChannelParams bp = channel;
      bp.num_symbols = size;
      bp.seed = splitmix64(schedule.seed ^ splitmix64((static_cast<std::uint64_t>(epoch) << 32) |
                                                      static_cast<std::uint64_t>(b)));
      const ChannelTrace trace = transmit(c, bp);
      LossGrad lg;
      try {
        lg = loss_and_grad(current(), batch_of(trace), cfg, c, opts, schedule.workers);
      } catch (const std::runtime_error&) {
        report.diverged = true;
        break;
      }
      std::copy(lg.grad_raw_w.begin(), lg.grad_raw_w.end(), grads.begin());
      grads.back() = lg.grad_raw_temp;
      const std::vector<double> last_good = theta;
      adam_step(adam, theta, grads, schedule.lr);
      if (!std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); })) {
        theta = last_good;
        report.diverged = true;
        break;
      }
      ++report.steps;
      epoch_loss += lg.loss;
    }
    if (report.diverged) break;
    report.loss_curve.push_back(epoch_loss / batches);

    if (schedule.validation_symbols > 0) {
      const auto est = bps_opt_estimate(validation.rx_symbols, cfg, c, current());
      const auto corrected = correct_phase(validation.rx_symbols, est, validation.phase_path,
                                           cfg.grid.sym_order);
      report.validation_bmi.push_back(
          optimize_demapper_variance(corrected.x_hat, validation.bits, c).bmi_bits);
    }
  }
  report.params = current();
  return report;
}

}  // namespace cpekit
