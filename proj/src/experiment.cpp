// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The cpekit Authors

#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "constellation.hpp"
#include "format.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "postproc.hpp"

namespace cpekit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kTopLevelKeys = {
    "constellation", "snr_db", "sigma_theta_sq", "algorithms", "N", "M", "wrap_terms",
    "full_sequence_bp", "realizations", "symbols", "seed", "exclude_edges", "initial_phase",
    "phi0", "demapper", "overrides", "bps_opt_params", "bps_opt_temperature", "output",
    "schedule", "eval_realizations", "eval_seed"};

std::vector<double> number_list(const json& v, const char* key) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError(std::string(key) + " must be a number or a list of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(std::string(key) + " must contain only numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

template <typename T>
T get_as(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string stem_of(const std::string& output) {
  if (output.size() > 4 && output.ends_with(".csv")) return output.substr(0, output.size() - 4);
  if (output.size() > 5 && output.ends_with(".json")) return output.substr(0, output.size() - 5);
  return output;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

// Complete ('\n'-terminated) lines of a file; a torn trailing line is dropped.
std::vector<std::string> complete_lines(const std::string& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::size_t pos = 0;
  for (;;) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << content;
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  fs::rename(tmp, path);
}

// Appends whole lines, repairing a torn final line first.
class Appender {
 public:
  explicit Appender(const std::string& path) {
    bool needs_newline = false;
    if (fs::exists(path) && fs::file_size(path) > 0) {
      std::ifstream in(path, std::ios::binary);
      in.seekg(-1, std::ios::end);
      char last = 0;
      in.get(last);
      needs_newline = last != '\n';
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
    if (needs_newline) out_ << '\n';
  }
  void line(const std::string& s) {
    out_ << s << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::string cell_key(double snr, double sigma, Algorithm a, int m) {
  return fmt_double(snr) + "|" + fmt_double(sigma) + "|" + std::string(to_string(a)) + "|" +
         std::to_string(m);
}

std::string summary_line(const std::string& hash, const CellResult& c, std::size_t symbols) {
  std::ostringstream os;
  os << hash << ',' << fmt_double(c.snr_db) << ',' << fmt_double(c.sigma_theta_sq) << ','
     << to_string(c.algorithm) << ',' << c.m_count << ',' << c.half_window << ','
     << c.realizations.size() << ',' << symbols << ',' << fmt_double(c.bmi_median) << ','
     << fmt_double(c.bmi_q1) << ',' << fmt_double(c.bmi_q3) << ','
     << fmt_double(c.sigma_opt_median) << ',' << c.slip_events;
  return os.str();
}

std::string realization_line(const std::string& hash, const CellResult& c, std::size_t r) {
  const auto& rr = c.realizations[r];
  std::ostringstream os;
  os << hash << ',' << fmt_double(c.snr_db) << ',' << fmt_double(c.sigma_theta_sq) << ','
     << to_string(c.algorithm) << ',' << c.m_count << ',' << c.half_window << ',' << r << ','
     << fmt_double(rr.bmi) << ',' << fmt_double(rr.sigma_opt) << ',' << rr.slip_events;
  return os.str();
}

void aggregate(CellResult& cell) {
  std::vector<double> b, s;
  cell.slip_events = 0;
  for (const auto& r : cell.realizations) {
    b.push_back(r.bmi);
    s.push_back(r.sigma_opt);
    cell.slip_events += r.slip_events;
  }
  cell.bmi_median = median(b);
  cell.bmi_q1 = quantile(b, 0.25);
  cell.bmi_q3 = quantile(b, 0.75);
  cell.sigma_opt_median = median(s);
}

struct AlgorithmSetup {
  Algorithm algorithm;
  int m_count;
  int wrap_terms;
  PhaseGrid grid;
  std::optional<BpsOptParams> params;
};

std::vector<AlgorithmSetup> setups_for(const ExperimentConfig& cfg, const BpsOptParams* trained) {
  std::vector<AlgorithmSetup> out;
  for (auto a : cfg.algorithms) {
    AlgorithmSetup s{a, cfg.m_count, cfg.wrap_terms, {}, std::nullopt};
    std::optional<std::string> params_path = cfg.bps_opt_params;
    if (auto it = cfg.overrides.find(a); it != cfg.overrides.end()) {
      if (it->second.m_count) s.m_count = *it->second.m_count;
      if (it->second.wrap_terms) s.wrap_terms = *it->second.wrap_terms;
      if (it->second.params_path) params_path = it->second.params_path;
    }
    s.grid = make_grid(s.m_count, build_constellation(cfg.constellation).sym_order());
    if (a == Algorithm::bps_opt) {
      if (trained != nullptr) {
        s.params = *trained;
      } else if (params_path) {
        try {
          s.params = params_from_json(json::parse(read_file(*params_path)));
        } catch (const json::exception& e) {
          throw ConfigError("cannot parse BPS weights '" + *params_path + "': " + e.what());
        }
      } else {
        s.params = BpsOptParams::uniform(cfg.half_window, cfg.bps_opt_temperature);
      }
      if (s.params->half_window() != cfg.half_window) {
        throw ConfigError("BPS weights were trained for N=" + std::to_string(s.params->half_window()) +
                          " but the config uses N=" + std::to_string(cfg.half_window));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Evaluates the selected algorithms of one (snr, sigma) cell.
std::vector<CellResult> run_cell(const ExperimentConfig& cfg, const Constellation& c,
                                 const std::vector<AlgorithmSetup>& setups,
                                 const std::vector<bool>& selected, double snr, double sigma,
                                 std::uint64_t base_seed, std::size_t workers) {
  const std::size_t na = setups.size();
  const auto reals = static_cast<std::size_t>(cfg.realizations);
  std::vector<CellResult> cells(na);
  for (std::size_t a = 0; a < na; ++a) {
    cells[a].snr_db = snr;
    cells[a].sigma_theta_sq = sigma;
    cells[a].algorithm = setups[a].algorithm;
    cells[a].m_count = setups[a].m_count;
    cells[a].half_window = cfg.half_window;
    cells[a].realizations.resize(reals);
  }
  const bool per_cell = cfg.demapper == DemapperMode::per_cell;
  // [algorithm][realization]
  std::vector<std::vector<std::vector<cplx>>> kept_x(na, std::vector<std::vector<cplx>>(reals));
  std::vector<std::vector<std::vector<std::uint8_t>>> kept_bits(
      na, std::vector<std::vector<std::uint8_t>>(reals));
  std::vector<std::vector<double>> seconds(na, std::vector<double>(reals, 0.0));

  parallel_for(reals, workers, [&](std::size_t r) {
    ChannelParams cp;
    cp.snr_db = snr;
    cp.sigma_theta_sq = sigma;
    cp.num_symbols = cfg.symbols;
    cp.seed = base_seed + r;
    cp.phi0 = cfg.phi0;
    cp.initial_phase = cfg.initial_phase;
    const ChannelTrace trace = transmit(c, cp);
    const std::size_t count = trace.size();
    const auto n = static_cast<std::size_t>(cfg.half_window);
    const std::size_t lo = cfg.exclude_edges ? n : 0;
    const std::size_t hi = cfg.exclude_edges ? count - n : count;
    const int m = c.bits_per_symbol();

    for (std::size_t a = 0; a < na; ++a) {
      if (!selected[a]) continue;
      const auto t0 = std::chrono::steady_clock::now();
      auto ecfg = EstimatorConfig::for_channel(cfg.half_window, setups[a].grid,
                                               std::max(trace.sigma_n_sq, 1e-10), sigma);
      ecfg.wrap_terms = setups[a].wrap_terms;
      ecfg.full_sequence_bp = cfg.full_sequence_bp;
      const auto est = estimate(setups[a].algorithm, trace.rx_symbols, ecfg, c,
                                setups[a].params ? &*setups[a].params : nullptr);
      const auto corrected = correct_phase(trace.rx_symbols, est, trace.phase_path, c.sym_order());
      std::span<const cplx> xs(corrected.x_hat.data() + lo, hi - lo);
      std::span<const std::uint8_t> bs(trace.bits.data() + lo * m, (hi - lo) * m);
      auto& rr = cells[a].realizations[r];
      rr.slip_events = corrected.slip_events.size();
      if (per_cell) {
        kept_x[a][r].assign(xs.begin(), xs.end());
        kept_bits[a][r].assign(bs.begin(), bs.end());
      } else {
        const auto rep = optimize_demapper_variance(xs, bs, c);
        rr.bmi = rep.bmi_bits;
        rr.sigma_opt = rep.demapper_sigma_sq;
      }
      seconds[a][r] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });

  for (std::size_t a = 0; a < na; ++a) {
    if (!selected[a]) continue;
    if (per_cell) {
      std::vector<std::span<const cplx>> xs(kept_x[a].begin(), kept_x[a].end());
      std::vector<std::span<const std::uint8_t>> bs(kept_bits[a].begin(), kept_bits[a].end());
      const double sigma_star = optimize_demapper_variance_shared(xs, bs, c).demapper_sigma_sq;
      for (std::size_t r = 0; r < reals; ++r) {
        cells[a].realizations[r].bmi = bmi_report(xs[r], bs[r], c, sigma_star).bmi_bits;
        cells[a].realizations[r].sigma_opt = sigma_star;
      }
    }
    aggregate(cells[a]);
    for (double s : seconds[a]) cells[a].wall_seconds += s;
  }
  return cells;
}

std::vector<CellResult> evaluate_impl(const ExperimentConfig& cfg, std::size_t workers,
                                      const BpsOptParams* trained, std::uint64_t base_seed) {
  cfg.validate();
  const Constellation c = build_constellation(cfg.constellation);
  const auto setups = setups_for(cfg, trained);
  std::vector<CellResult> out;
  const std::vector<bool> all(setups.size(), true);
  for (double snr : cfg.snr_db) {
    for (double sigma : cfg.sigma_theta_sq) {
      auto cells = run_cell(cfg, c, setups, all, snr, sigma, base_seed, workers);
      for (auto& cell : cells) out.push_back(std::move(cell));
    }
  }
  return out;
}

}  // namespace

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Constellation build_constellation(const ConstellationSpec& spec) {
  const Constellation base = Constellation::qam(spec.order);
  if (spec.lambda) return maxwell_boltzmann_shape(base, *spec.lambda);
  if (spec.entropy_bits) return shape_for_entropy(base, *spec.entropy_bits).constellation;
  return base;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!kTopLevelKeys.contains(key)) throw ConfigError("unknown config field '" + key + "'");
  }
  ExperimentConfig cfg;
  if (doc.contains("constellation")) {
    const auto& cs = doc.at("constellation");
    cfg.constellation.order = get_as<int>(cs, "order", 64);
    if (cs.contains("lambda")) cfg.constellation.lambda = get_as<double>(cs, "lambda", 0.0);
    if (cs.contains("entropy_bits")) {
      cfg.constellation.entropy_bits = get_as<double>(cs, "entropy_bits", 0.0);
    }
  }
  if (doc.contains("snr_db")) cfg.snr_db = number_list(doc.at("snr_db"), "snr_db");
  if (doc.contains("sigma_theta_sq")) {
    cfg.sigma_theta_sq = number_list(doc.at("sigma_theta_sq"), "sigma_theta_sq");
  }
  if (doc.contains("algorithms")) {
    for (const auto& a : doc.at("algorithms")) {
      if (!a.is_string()) throw ConfigError("algorithms must be strings");
      const auto alg = parse_algorithm(a.get<std::string>());
      if (!alg) throw ConfigError("unknown algorithm '" + a.get<std::string>() + "'");
      cfg.algorithms.push_back(*alg);
    }
  }
  cfg.half_window = get_as<int>(doc, "N", cfg.half_window);
  cfg.m_count = get_as<int>(doc, "M", cfg.m_count);
  cfg.wrap_terms = get_as<int>(doc, "wrap_terms", cfg.wrap_terms);
  cfg.full_sequence_bp = get_as<bool>(doc, "full_sequence_bp", cfg.full_sequence_bp);
  cfg.realizations = get_as<int>(doc, "realizations", cfg.realizations);
  cfg.symbols = get_as<std::size_t>(doc, "symbols", cfg.symbols);
  cfg.seed = get_as<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.exclude_edges = get_as<bool>(doc, "exclude_edges", cfg.exclude_edges);
  const auto ip = get_as<std::string>(doc, "initial_phase", "fixed");
  if (ip == "fixed") {
    cfg.initial_phase = InitialPhase::fixed;
  } else if (ip == "uniform") {
    cfg.initial_phase = InitialPhase::uniform;
  } else {
    throw ConfigError("initial_phase must be 'fixed' or 'uniform'");
  }
  cfg.phi0 = get_as<double>(doc, "phi0", cfg.phi0);
  const auto dm = get_as<std::string>(doc, "demapper", "per_realization");
  if (dm == "per_realization") {
    cfg.demapper = DemapperMode::per_realization;
  } else if (dm == "per_cell") {
    cfg.demapper = DemapperMode::per_cell;
  } else {
    throw ConfigError("demapper must be 'per_realization' or 'per_cell'");
  }
  if (doc.contains("overrides")) {
    for (const auto& [name, ov] : doc.at("overrides").items()) {
      const auto alg = parse_algorithm(name);
      if (!alg) throw ConfigError("override for unknown algorithm '" + name + "'");
      AlgorithmOverride o;
      if (ov.contains("M")) o.m_count = get_as<int>(ov, "M", 0);
      if (ov.contains("wrap_terms")) o.wrap_terms = get_as<int>(ov, "wrap_terms", 0);
      if (ov.contains("params")) o.params_path = get_as<std::string>(ov, "params", "");
      cfg.overrides[*alg] = o;
    }
  }
  if (doc.contains("bps_opt_params")) cfg.bps_opt_params = get_as<std::string>(doc, "bps_opt_params", "");
  cfg.bps_opt_temperature = get_as<double>(doc, "bps_opt_temperature", cfg.bps_opt_temperature);
  cfg.output = get_as<std::string>(doc, "output", cfg.output);
  if (doc.contains("schedule")) {
    try {
      cfg.schedule = TrainSchedule::from_json(doc.at("schedule"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid schedule: ") + e.what());
    }
  }
  cfg.eval_realizations = get_as<int>(doc, "eval_realizations", cfg.eval_realizations);
  cfg.eval_seed = get_as<std::uint64_t>(doc, "eval_seed", cfg.eval_seed);
  return cfg;
}

json ExperimentConfig::to_json() const {
  json cs = {{"order", constellation.order}};
  if (constellation.lambda) cs["lambda"] = *constellation.lambda;
  if (constellation.entropy_bits) cs["entropy_bits"] = *constellation.entropy_bits;
  json algs = json::array();
  for (auto a : algorithms) algs.push_back(std::string(to_string(a)));
  json ov = json::object();
  for (const auto& [a, o] : overrides) {
    json e = json::object();
    if (o.m_count) e["M"] = *o.m_count;
    if (o.wrap_terms) e["wrap_terms"] = *o.wrap_terms;
    if (o.params_path) e["params"] = *o.params_path;
    ov[std::string(to_string(a))] = e;
  }
  json doc = {{"constellation", cs},
              {"snr_db", snr_db},
              {"sigma_theta_sq", sigma_theta_sq},
              {"algorithms", algs},
              {"N", half_window},
              {"M", m_count},
              {"wrap_terms", wrap_terms},
              {"full_sequence_bp", full_sequence_bp},
              {"realizations", realizations},
              {"symbols", symbols},
              {"seed", seed},
              {"exclude_edges", exclude_edges},
              {"initial_phase", initial_phase == InitialPhase::uniform ? "uniform" : "fixed"},
              {"phi0", phi0},
              {"demapper", demapper == DemapperMode::per_cell ? "per_cell" : "per_realization"},
              {"overrides", ov},
              {"bps_opt_temperature", bps_opt_temperature},
              {"output", output},
              {"schedule", schedule.to_json()},
              {"eval_realizations", eval_realizations},
              {"eval_seed", eval_seed}};
  if (bps_opt_params) doc["bps_opt_params"] = *bps_opt_params;
  return doc;
}

std::string ExperimentConfig::hash() const {
  json doc = to_json();
  doc.erase("output");
  std::uint64_t h = fnv1a(doc.dump());
  // Weight files are part of the experiment, not just their paths.
  std::vector<std::string> paths;
  if (bps_opt_params) paths.push_back(*bps_opt_params);
  for (const auto& [a, o] : overrides) {
    if (o.params_path) paths.push_back(*o.params_path);
  }
  for (const auto& p : paths) {
    if (fs::exists(p)) h = fnv1a(read_file(p), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ExperimentConfig::validate() const {
  if (snr_db.empty()) throw ConfigError("snr_db list is empty");
  if (sigma_theta_sq.empty()) throw ConfigError("sigma_theta_sq list is empty");
  if (algorithms.empty()) throw ConfigError("algorithms list is empty");
  if (realizations < 1) throw ConfigError("realizations must be >= 1");
  if (half_window < 0) throw ConfigError("N must be >= 0");
  if (m_count < 2) throw ConfigError("M must be >= 2");
  if (wrap_terms < 1) throw ConfigError("wrap_terms must be >= 1");
  if (symbols < 2 * static_cast<std::size_t>(half_window) + 1) {
    throw ConfigError("symbols per realization must be >= 2N+1");
  }
  for (double s : sigma_theta_sq) {
    if (!(s >= 0.0)) throw ConfigError("sigma_theta_sq values must be >= 0");
  }
  for (const auto& [a, o] : overrides) {
    if (o.m_count && *o.m_count < 2) throw ConfigError("override M must be >= 2");
    if (o.wrap_terms && *o.wrap_terms < 1) throw ConfigError("override wrap_terms must be >= 1");
  }
  if (constellation.lambda && constellation.entropy_bits) {
    throw ConfigError("give either lambda or entropy_bits for the constellation, not both");
  }
  try {
    (void)build_constellation(constellation);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("constellation: ") + e.what());
  }
  if (!(bps_opt_temperature > 0.0)) throw ConfigError("bps_opt_temperature must be > 0");
}

std::vector<CellResult> evaluate_cells(const ExperimentConfig& cfg, std::size_t workers) {
  return evaluate_impl(cfg, workers, nullptr, cfg.seed);
}

SweepOutcome run_sweep(const ExperimentConfig& cfg, std::size_t workers) {
  cfg.validate();
  const std::string hash = cfg.hash();
  const Constellation c = build_constellation(cfg.constellation);
  const auto setups = setups_for(cfg, nullptr);

  const std::string stem = stem_of(cfg.output);
  const std::string real_path = stem + ".realizations.csv";
  const std::string timing_path = stem + ".timing.csv";

  // Reusable rows of a previous (possibly interrupted) run of this config.
  std::map<std::string, std::string> old_summary;
  std::map<std::string, std::vector<std::string>> old_real;
  for (const auto& line : complete_lines(cfg.output)) {
    const auto f = split(line, ',');
    if (f.size() != 13 || f[0] != hash) continue;
    const auto alg = parse_algorithm(f[3]);
    if (!alg) continue;
    old_summary[cell_key(std::stod(f[1]), std::stod(f[2]), *alg, std::stoi(f[4]))] = line;
  }
  for (const auto& line : complete_lines(real_path)) {
    const auto f = split(line, ',');
    if (f.size() != 10 || f[0] != hash) continue;
    const auto alg = parse_algorithm(f[3]);
    if (!alg) continue;
    old_real[cell_key(std::stod(f[1]), std::stod(f[2]), *alg, std::stoi(f[4]))].push_back(line);
  }

  const bool fresh_summary = !fs::exists(cfg.output) || fs::file_size(cfg.output) == 0;
  const bool fresh_real = !fs::exists(real_path) || fs::file_size(real_path) == 0;
  Appender summary_out(cfg.output);
  Appender real_out(real_path);
  if (fresh_summary) summary_out.line(kSummaryHeader);
  if (fresh_real) real_out.line(kRealizationHeader);

  SweepOutcome outcome;
  std::string summary_text = std::string(kSummaryHeader) + "\n";
  std::string real_text = std::string(kRealizationHeader) + "\n";
  std::string timing_text = "snr_db,sigma_theta_sq,algorithm,M,seconds\n";

  for (double snr : cfg.snr_db) {
    for (double sigma : cfg.sigma_theta_sq) {
      std::vector<bool> selected(setups.size());
      std::vector<std::string> keys(setups.size());
      bool any = false;
      for (std::size_t a = 0; a < setups.size(); ++a) {
        keys[a] = cell_key(snr, sigma, setups[a].algorithm, setups[a].m_count);
        const bool done = old_summary.contains(keys[a]) && old_real.contains(keys[a]) &&
                          old_real[keys[a]].size() == static_cast<std::size_t>(cfg.realizations);
        selected[a] = !done;
        any = any || !done;
      }
      std::vector<CellResult> cells;
      if (any) cells = run_cell(cfg, c, setups, selected, snr, sigma, cfg.seed, workers);
      for (std::size_t a = 0; a < setups.size(); ++a) {
        if (selected[a]) {
          const auto& cell = cells[a];
          std::string rl;
          for (std::size_t r = 0; r < cell.realizations.size(); ++r) {
            const auto line = realization_line(hash, cell, r);
            real_out.line(line);
            rl += line + "\n";
          }
          const auto sl = summary_line(hash, cell, cfg.symbols);
          summary_out.line(sl);
          summary_text += sl + "\n";
          real_text += rl;
          timing_text += fmt_double(snr) + "," + fmt_double(sigma) + "," +
                         std::string(to_string(cell.algorithm)) + "," +
                         std::to_string(cell.m_count) + "," + fmt_double(cell.wall_seconds) + "\n";
          outcome.cells.push_back(cell);
          ++outcome.computed_cells;
        } else {
          summary_text += old_summary[keys[a]] + "\n";
          CellResult cell;
          cell.snr_db = snr;
          cell.sigma_theta_sq = sigma;
          cell.algorithm = setups[a].algorithm;
          cell.m_count = setups[a].m_count;
          cell.half_window = cfg.half_window;
          for (const auto& line : old_real[keys[a]]) {
            real_text += line + "\n";
            const auto f = split(line, ',');
            cell.realizations.push_back({std::stod(f[7]), std::stod(f[8]),
                                         static_cast<std::size_t>(std::stoull(f[9]))});
          }
          aggregate(cell);
          outcome.cells.push_back(std::move(cell));
          ++outcome.reused_cells;
        }
      }
    }
  }
  write_atomic(cfg.output, summary_text);
  write_atomic(real_path, real_text);
  write_atomic(timing_path, timing_text);
  return outcome;
}

TrainReport run_train(const ExperimentConfig& cfg_in, std::size_t workers,
                      std::vector<CellResult>* held_out) {
  ExperimentConfig cfg = cfg_in;
  if (cfg.algorithms.empty()) cfg.algorithms = {Algorithm::bps_opt};
  cfg.validate();
  if (cfg.snr_db.size() != 1 || cfg.sigma_theta_sq.size() != 1) {
    throw ConfigError("training needs exactly one (snr_db, sigma_theta_sq) cell; got " +
                      std::to_string(cfg.snr_db.size()) + " x " +
                      std::to_string(cfg.sigma_theta_sq.size()));
  }
  try {
    cfg.schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid schedule: ") + e.what());
  }
  const Constellation c = build_constellation(cfg.constellation);
  int m_count = cfg.m_count;
  if (auto it = cfg.overrides.find(Algorithm::bps_opt); it != cfg.overrides.end() && it->second.m_count) {
    m_count = *it->second.m_count;
  }
  ChannelParams cp;
  cp.snr_db = cfg.snr_db[0];
  cp.sigma_theta_sq = cfg.sigma_theta_sq[0];
  cp.num_symbols = cfg.symbols;
  cp.seed = cfg.seed;
  cp.phi0 = cfg.phi0;
  cp.initial_phase = cfg.initial_phase;
  const double var = std::max(snr_to_noise_var(cp.snr_db, c), 1e-10);
  auto ecfg = EstimatorConfig::for_channel(cfg.half_window, make_grid(m_count, c.sym_order()), var,
                                           cp.sigma_theta_sq);
  TrainSchedule schedule = cfg.schedule;
  schedule.workers = workers;
  TrainReport report = train(schedule, cp, ecfg, c);

  json doc = report.to_json();
  doc["config_hash"] = cfg.hash();
  doc["constellation"] = c.to_json();
  if (cfg.eval_realizations > 0) {
    ExperimentConfig ecfg_eval = cfg;
    ecfg_eval.realizations = cfg.eval_realizations;
    auto cells = evaluate_impl(ecfg_eval, workers, &report.params, cfg.eval_seed);
    doc["held_out"] = cells_to_json(cells);
    if (held_out != nullptr) *held_out = std::move(cells);
  }
  {
    std::ostringstream os;
    os << doc.dump(2) << '\n';
    write_atomic(cfg.output, os.str());
  }
  {
    std::ostringstream os;
    write_weights_csv(os, report.params);
    write_atomic(stem_of(cfg.output) + ".weights.csv", os.str());
  }
  return report;
}

json cells_to_json(const std::vector<CellResult>& cells) {
  json arr = json::array();
  for (const auto& c : cells) {
    json reals = json::array();
    for (const auto& r : c.realizations) {
      reals.push_back({{"bmi", r.bmi}, {"sigma_opt", r.sigma_opt}, {"slip_events", r.slip_events}});
    }
    arr.push_back({{"snr_db", c.snr_db},
                   {"sigma_theta_sq", c.sigma_theta_sq},
                   {"algorithm", std::string(to_string(c.algorithm))},
                   {"M", c.m_count},
                   {"N", c.half_window},
                   {"bmi_median", c.bmi_median},
                   {"bmi_q1", c.bmi_q1},
                   {"bmi_q3", c.bmi_q3},
                   {"sigma_opt_median", c.sigma_opt_median},
                   {"slip_events", c.slip_events},
                   {"realizations", reals}});
  }
  return arr;
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("results file '" + path + "' does not exist");
  std::vector<SummaryRow> rows;
  const auto lines = complete_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == 0 && lines[i].starts_with("config_hash")) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 13) throw ConfigError("malformed results row " + std::to_string(i + 1));
    try {
      rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), f[3], std::stoi(f[4]), std::stoi(f[5]),
                      std::stod(f[8])});
    } catch (const std::exception&) {
      throw ConfigError("malformed results row " + std::to_string(i + 1));
    }
  }
  return rows;
}

std::vector<std::string> emit_plot_data(const std::vector<SummaryRow>& rows,
                                        const BpsOptParams* params, const std::string& prefix) {
  std::vector<std::string> written;
  // Column per algorithm; disambiguated by M when one algorithm appears with several grids.
  std::map<std::string, std::set<int>> grids;
  for (const auto& r : rows) grids[r.algorithm].insert(r.m_count);
  auto column = [&](const SummaryRow& r) {
    return grids[r.algorithm].size() > 1 ? r.algorithm + "_M" + std::to_string(r.m_count)
                                         : r.algorithm;
  };

  if (rows.empty()) {
    const std::string path = prefix + "bmi_vs_snr.csv";
    write_atomic(path, "snr_db\n");
    written.push_back(path);
  }
  std::vector<double> sigmas;
  for (const auto& r : rows) {
    if (std::find(sigmas.begin(), sigmas.end(), r.sigma_theta_sq) == sigmas.end()) {
      sigmas.push_back(r.sigma_theta_sq);
    }
  }
  for (double sigma : sigmas) {
    std::vector<std::string> cols;
    std::vector<double> snrs;
    std::map<std::pair<double, std::string>, double> value;
    for (const auto& r : rows) {
      if (r.sigma_theta_sq != sigma) continue;
      const auto col = column(r);
      if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
      if (std::find(snrs.begin(), snrs.end(), r.snr_db) == snrs.end()) snrs.push_back(r.snr_db);
      value[{r.snr_db, col}] = r.bmi_median;
    }
    std::sort(snrs.begin(), snrs.end());
    std::ostringstream os;
    os << "snr_db";
    for (const auto& col : cols) os << ',' << col;
    os << '\n';
    for (double snr : snrs) {
      os << fmt_double(snr);
      for (const auto& col : cols) {
        os << ',';
        if (auto it = value.find({snr, col}); it != value.end()) os << fmt_double(it->second);
      }
      os << '\n';
    }
    const std::string path = prefix + "bmi_vs_snr_sigma_" + fmt_double(sigma) + ".csv";
    write_atomic(path, os.str());
    written.push_back(path);
  }
  if (params != nullptr) {
    std::ostringstream os;
    write_weights_csv(os, *params);
    const std::string path = prefix + "weights.csv";
    write_atomic(path, os.str());
    written.push_back(path);
  }
  return written;
}

}  // namespace cpekit
