#pragma once

// Experiment orchestration: JSON configs, seeded trial sweeps over a worker pool, Wilson
// summaries, CSV/JSON persistence, constant calibration and minimal-n scaling reports.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "smpsim/errors.hpp"
#include "smpsim/identity.hpp"
#include "smpsim/infer.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/public_uniformity.hpp"
#include "smpsim/rng.hpp"
#include "smpsim/simulate.hpp"
#include "smpsim/testers.hpp"

namespace smpsim {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Constants

struct Constants {
  double c_l2 = kDefaultCl2;
  double c_learn = kDefaultClearn;
  double c_flying_pony = kDefaultCflyingPony;
  double warmup_c = 1.0;
  std::size_t smooth_batches = kDefaultSmoothBatches;
  LevinConstants levin;
  double levin_scale = 1.0;
};

inline void to_json(nlohmann::json& j, const Constants& c) {
  j = nlohmann::json{{"c_l2", c.c_l2},
                     {"c_learn", c.c_learn},
                     {"c_flying_pony", c.c_flying_pony},
                     {"warmup_c", c.warmup_c},
                     {"smooth_batches", c.smooth_batches},
                     {"levin_c1", c.levin.c1},
                     {"levin_c2", c.levin.c2},
                     {"levin_c3", c.levin.c3},
                     {"levin_scale", c.levin_scale}};
}

/// Missing keys keep their defaults, so a calibration file may carry a single constant.
inline void from_json(const nlohmann::json& j, Constants& c) {
  const auto& src = j.contains("constants") ? j.at("constants") : j;
  c.c_l2 = src.value("c_l2", c.c_l2);
  c.c_learn = src.value("c_learn", c.c_learn);
  c.c_flying_pony = src.value("c_flying_pony", c.c_flying_pony);
  c.warmup_c = src.value("warmup_c", c.warmup_c);
  c.smooth_batches = src.value("smooth_batches", c.smooth_batches);
  c.levin.c1 = src.value("levin_c1", c.levin.c1);
  c.levin.c2 = src.value("levin_c2", c.levin.c2);
  c.levin.c3 = src.value("levin_c3", c.levin.c3);
  c.levin_scale = src.value("levin_scale", c.levin_scale);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline Constants load_constants(const std::string& path) {
  try {
    return read_json_file(path).get<Constants>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad constants file '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Instances

enum class ThetaMode { random, plus, minus, alternating, alternating_minus };

inline ThetaMode theta_mode_from_string(const std::string& s) {
  if (s == "random") return ThetaMode::random;
  if (s == "plus") return ThetaMode::plus;
  if (s == "minus") return ThetaMode::minus;
  if (s == "alternating") return ThetaMode::alternating;
  if (s == "alternating-minus") return ThetaMode::alternating_minus;
  throw ConfigError("unknown theta mode '" + s + "' (random, plus, minus, alternating, alternating-minus)");
}

inline std::vector<int> make_theta(ThetaMode mode, std::size_t half, std::uint64_t seed) {
  std::vector<int> t(half);
  for (std::size_t i = 0; i < half; ++i) {
    switch (mode) {
      case ThetaMode::random: break;
      case ThetaMode::plus: t[i] = 1; break;
      case ThetaMode::minus: t[i] = -1; break;
      case ThetaMode::alternating: t[i] = i % 2 == 0 ? 1 : -1; break;
      case ThetaMode::alternating_minus: t[i] = i % 2 == 0 ? -1 : 1; break;
    }
  }
  if (mode == ThetaMode::random) {
    Rng g(derive_seed(seed, 0x5448455441000000ULL));
    t = random_signs(half, g);
  }
  return t;
}

/// name: uniform | paninski | flying-pony | two-level | relative-paninski | file.
/// two-level is q = (weight, 1 - weight) x u_{k/2}; relative-paninski perturbs it at eps.
struct InstanceSpec {
  std::string name = "uniform";
  double eps = 0.3;
  std::string theta = "random";
  double weight = 0.3;
  std::string path;

  Pmf make(std::size_t k, std::uint64_t seed) const {
    const ThetaMode mode = theta_mode_from_string(theta);
    if (name == "uniform") return uniform(k);
    if (name == "paninski") return paninski({k, eps, make_theta(mode, k / 2, seed)});
    if (name == "flying-pony") return flying_pony(k, make_theta(mode, k / 2, seed));
    if (name == "two-level") return two_level_product(k, weight);
    if (name == "relative-paninski") return relative_paninski(two_level_product(k, weight), eps, make_theta(mode, k / 2, seed));
    if (name == "file") {
      Pmf p = read_json_file(path).get<Pmf>();
      if (p.k() != k) throw ConfigError("instance file '" + path + "' has k = " + std::to_string(p.k()));
      return p;
    }
    throw ConfigError("unknown instance '" + name + "'");
  }
};

inline void to_json(nlohmann::json& j, const InstanceSpec& s) {
  j = nlohmann::json{{"name", s.name}, {"eps", s.eps}, {"theta", s.theta}, {"weight", s.weight}};
  if (!s.path.empty()) j["path"] = s.path;
}

inline void from_json(const nlohmann::json& j, InstanceSpec& s) {
  s.name = j.value("name", s.name);
  s.eps = j.value("eps", s.eps);
  s.theta = j.value("theta", s.theta);
  s.weight = j.value("weight", s.weight);
  s.path = j.value("path", s.path);
}

/// CLI shorthand: uniform | paninski:<eps>[:<theta>] | flying-pony[:<theta>] | two-level[:<w>] |
/// relative-paninski:<eps>[:<theta>] | a path to a pmf JSON file.
inline InstanceSpec parse_dist(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  InstanceSpec s;
  if (parts.empty()) throw ConfigError("empty --dist");
  const std::string& head = parts[0];
  auto num = [&](std::size_t i, double def) {
    if (parts.size() <= i) return def;
    try {
      return std::stod(parts[i]);
    } catch (const std::exception&) {
      throw ConfigError("--dist '" + text + "': '" + parts[i] + "' is not a number");
    }
  };
  if (head == "uniform") {
    s.name = "uniform";
  } else if (head == "paninski" || head == "relative-paninski") {
    s.name = head;
    s.eps = num(1, 0.3);
    if (parts.size() > 2) s.theta = parts[2];
  } else if (head == "flying-pony") {
    s.name = head;
    if (parts.size() > 1) s.theta = parts[1];
  } else if (head == "two-level") {
    s.name = head;
    s.weight = num(1, 0.3);
  } else {
    s.name = "file";
    s.path = text;
  }
  theta_mode_from_string(s.theta);
  return s;
}

/// Ground truth for test protocols: should the protocol accept?
inline bool instance_is_null(const InstanceSpec& s, const std::string& protocol) {
  if (protocol == "identity") return false;
  if (s.name == "uniform") return true;
  if (s.name == "paninski") return s.eps == 0.0;
  return false;
}

// ---------------------------------------------------------------------------
// Experiments

struct Cell {
  std::size_t k = 2;
  unsigned ell = 1;
  double eps = 0.3;
  std::uint64_t n = 0;  // 0: protocol default
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string protocol = "smooth";
  InstanceSpec instance;
  InstanceSpec reference = [] {
    InstanceSpec s;
    s.name = "two-level";
    return s;
  }();  // identity only
  std::string inner_protocol = "smooth";  // identity only
  std::vector<std::size_t> k_grid{16};
  std::vector<unsigned> ell_grid{1};
  std::vector<double> eps_grid{0.3};
  std::vector<std::uint64_t> n_grid{0};
  std::size_t trials = 10;
  std::uint64_t master_seed = 1;
  std::string engine = "aggregate";
  std::string output;
  std::string constants_file;
  Constants constants;

  std::vector<Cell> cells() const {
    std::vector<Cell> out;
    for (auto k : k_grid)
      for (auto l : ell_grid)
        for (auto e : eps_grid)
          for (auto n : n_grid) out.push_back({k, l, e, n});
    return out;
  }

  void validate() const {
    if (schema_version != kSchemaVersion)
      throw ConfigError("schema_version: expected " + std::to_string(kSchemaVersion) + ", got " + std::to_string(schema_version));
    static const char* known[] = {"simulate", "learn", "private-si", "smooth", "levin", "warmup", "flying-pony", "identity"};
    if (std::find(std::begin(known), std::end(known), protocol) == std::end(known))
      throw ConfigError("protocol: unknown protocol id '" + protocol + "'");
    static const char* instances[] = {"uniform", "paninski", "flying-pony", "two-level", "relative-paninski", "file"};
    if (std::find(std::begin(instances), std::end(instances), instance.name) == std::end(instances))
      throw ConfigError("instance: unknown instance id '" + instance.name + "'");
    if (k_grid.empty() || ell_grid.empty() || eps_grid.empty() || n_grid.empty()) throw ConfigError("grid: every axis needs a value");
    if (trials < 1) throw ConfigError("trials: must be >= 1");
    if (engine != "players" && engine != "aggregate") throw ConfigError("engine: expected players or aggregate");
  }
};

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.schema_version = j.value("schema_version", 0);
  c.protocol = j.value("protocol", c.protocol);
  if (j.contains("instance")) c.instance = j.at("instance").get<InstanceSpec>();
  if (j.contains("reference")) c.reference = j.at("reference").get<InstanceSpec>();
  c.inner_protocol = j.value("inner_protocol", c.inner_protocol);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    if (g.contains("k")) c.k_grid = g.at("k").get<std::vector<std::size_t>>();
    if (g.contains("ell")) c.ell_grid = g.at("ell").get<std::vector<unsigned>>();
    if (g.contains("eps")) c.eps_grid = g.at("eps").get<std::vector<double>>();
    if (g.contains("n")) c.n_grid = g.at("n").get<std::vector<std::uint64_t>>();
  }
  c.trials = j.value("trials", c.trials);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.engine = j.value("engine", c.engine);
  c.output = j.value("output", c.output);
  c.constants_file = j.value("constants", c.constants_file);
  if (!c.constants_file.empty()) c.constants = load_constants(c.constants_file);
  if (j.contains("constant_overrides")) from_json(j.at("constant_overrides"), c.constants);  // overlay on the file
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"schema_version", c.schema_version},
                     {"protocol", c.protocol},
                     {"instance", c.instance},
                     {"reference", c.reference},
                     {"inner_protocol", c.inner_protocol},
                     {"grid", {{"k", c.k_grid}, {"ell", c.ell_grid}, {"eps", c.eps_grid}, {"n", c.n_grid}}},
                     {"trials", c.trials},
                     {"master_seed", c.master_seed},
                     {"engine", c.engine},
                     {"output", c.output},
                     {"constant_overrides", c.constants}};
  if (!c.constants_file.empty()) j["constants"] = c.constants_file;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  ExperimentConfig c;
  try {
    c = read_json_file(path).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad experiment config '" + path + "': " + e.what());
  }
  c.validate();
  return c;
}

struct TrialReport {
  std::size_t cell = 0;
  std::size_t k = 0;
  unsigned ell = 0;
  double eps = 0.0;
  std::uint64_t n = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string decision;
  std::int64_t symbol = -1;
  bool correct = false;
  std::uint64_t players = 0;
  double public_bits = 0.0;
  double metric = 0.0;  // learn: TV(estimate, p); simulate: batches used

  friend bool operator==(const TrialReport&, const TrialReport&) = default;
};

struct CellSummary {
  std::size_t cell = 0;
  Cell coords;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double rate = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
  double mean_players = 0.0;
  double mean_public_bits = 0.0;
  double mean_metric = 0.0;
  double output_tv = -1.0;  // simulate: TV(empirical output law, p)
};

struct ResultSet {
  std::vector<TrialReport> reports;
  std::vector<CellSummary> summaries;
  std::vector<double> wall_ms;  // per report, kept out of the data files
};

struct Interval {
  double lo, hi;
};

/// Wilson score interval (95% by default).
inline Interval wilson(std::size_t successes, std::size_t n, double z = 1.96) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Runs f(i) for i in [0, count) on `workers` threads. Results must be written by index.
inline void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& f) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::uint64_t trial_seed(std::uint64_t master, std::size_t cell, std::size_t trial) {
  return derive_seed(master, cell, trial);
}

inline std::uint64_t cell_seed(std::uint64_t master, std::size_t cell) {
  return derive_seed(master, 0x43454c4c00000000ULL, cell);
}

inline UniformityRequest uniformity_request(const std::string& protocol, const Cell& c, const Constants& k,
                                            Engine engine) {
  UniformityRequest r;
  r.protocol = uniformity_protocol_from_string(protocol);
  r.ell = c.ell;
  r.eps = c.eps;
  r.players = c.n;
  r.engine = engine;
  r.c_l2 = k.c_l2;
  r.smooth_batches = k.smooth_batches;
  r.levin = k.levin;
  r.levin_scale = k.levin_scale;
  r.warmup_c = k.warmup_c;
  return r;
}

/// One seeded trial of one cell.
inline TrialReport run_trial(const ExperimentConfig& cfg, std::size_t cell_index, const Cell& c, std::size_t trial) {
  TrialReport r;
  r.cell = cell_index;
  r.k = c.k;
  r.ell = c.ell;
  r.eps = c.eps;
  r.n = c.n;
  r.trial = trial;
  r.seed = trial_seed(cfg.master_seed, cell_index, trial);
  const Engine engine = engine_from_string(cfg.engine);
  const Constants& K = cfg.constants;
  const bool expect_accept = cfg.protocol == "identity"
                                 ? cfg.instance.name == cfg.reference.name && cfg.instance.path == cfg.reference.path &&
                                       cfg.instance.weight == cfg.reference.weight
                                 : instance_is_null(cfg.instance, cfg.protocol);

  if (cfg.protocol == "simulate") {
    const Pmf p = cfg.instance.make(c.k, cell_seed(cfg.master_seed, cell_index));
    Rng g(r.seed);
    const SimOutcome o = simulate_sample(p, c.ell, g);
    r.decision = "symbol";
    r.symbol = o.symbol;
    r.correct = true;
    r.players = o.players_used;
    r.metric = static_cast<double>(o.batches_used);
    return r;
  }

  const Pmf p = cfg.instance.make(c.k, r.seed);
  auto fill = [&](const Verdict& v, std::uint64_t players, double bits) {
    r.decision = to_string(v.decision);
    r.players = players;
    r.public_bits = bits;
    r.correct = expect_accept ? v.accepted() : v.rejected();
  };

  if (cfg.protocol == "learn") {
    SiParams sp{c.k, c.ell, c.eps, SiTask::learn, K.c_learn, K.c_l2};
    Rng g(r.seed);
    const auto res = simulate_and_infer(p, sp, c.n ? c.n : sp.default_blocks(), g, engine);
    r.decision = to_string(res.verdict.decision);
    r.players = res.players_used;
    r.metric = res.estimate ? tv(*res.estimate, p) : 1.0;
    r.correct = res.estimate && r.metric <= c.eps;
    return r;
  }
  if (cfg.protocol == "flying-pony") {
    const std::uint64_t n = c.n ? c.n : flying_pony_players(c.k, K.c_flying_pony);
    if (engine == Engine::players) {
      fill(flying_pony_protocol(p, n, r.seed).verdict, n, 0.0);
    } else {
      Rng g(r.seed);
      fill(flying_pony_aggregate(p, n, g), n, 0.0);
    }
    return r;
  }
  if (cfg.protocol == "identity") {
    const Pmf q = cfg.reference.make(c.k, cell_seed(cfg.master_seed, cell_index));
    const auto run = identity_test_via_uniformity(p, build_map(q), uniformity_request(cfg.inner_protocol, c, K, engine), r.seed);
    fill(run.verdict, run.players_used, run.public_bits);
    return r;
  }
  const auto run = run_uniformity(Source::direct(p), uniformity_request(cfg.protocol, c, K, engine), r.seed);
  fill(run.verdict, run.players_used, run.public_bits);
  return r;
}

inline ResultSet run_experiment(const ExperimentConfig& cfg, unsigned workers = 1) {
  cfg.validate();
  const auto cells = cfg.cells();
  ResultSet rs;
  const std::size_t total = cells.size() * cfg.trials;
  rs.reports.resize(total);
  rs.wall_ms.resize(total);
  parallel_for(total, workers, [&](std::size_t i) {
    const std::size_t ci = i / cfg.trials, t = i % cfg.trials;
    const auto start = std::chrono::steady_clock::now();
    rs.reports[i] = run_trial(cfg, ci, cells[ci], t);
    rs.wall_ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  });
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    CellSummary s;
    s.cell = ci;
    s.coords = cells[ci];
    std::vector<std::uint64_t> symbol_counts(cells[ci].k, 0);
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const auto& r = rs.reports[ci * cfg.trials + t];
      ++s.trials;
      s.successes += r.correct;
      s.mean_players += static_cast<double>(r.players);
      s.mean_public_bits += r.public_bits;
      s.mean_metric += r.metric;
      if (r.symbol >= 0) ++symbol_counts[static_cast<std::size_t>(r.symbol)];
    }
    const double n = static_cast<double>(s.trials);
    s.rate = static_cast<double>(s.successes) / n;
    const auto w = wilson(s.successes, s.trials);
    s.wilson_lo = w.lo;
    s.wilson_hi = w.hi;
    s.mean_players /= n;
    s.mean_public_bits /= n;
    s.mean_metric /= n;
    if (cfg.protocol == "simulate")
      s.output_tv = tv(learn_empirical(symbol_counts), cfg.instance.make(cells[ci].k, cell_seed(cfg.master_seed, ci)));
    rs.summaries.push_back(s);
  }
  return rs;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* kReportHeader = "cell,k,ell,eps,n,trial,seed,decision,symbol,correct,players,public_bits,metric";

inline std::string reports_csv(const std::vector<TrialReport>& reports) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : reports) {
    out += std::to_string(r.cell) + "," + std::to_string(r.k) + "," + std::to_string(r.ell) + "," + fmt_double(r.eps) +
           "," + std::to_string(r.n) + "," + std::to_string(r.trial) + "," + std::to_string(r.seed) + "," + r.decision +
           "," + std::to_string(r.symbol) + "," + (r.correct ? "1" : "0") + "," + std::to_string(r.players) + "," +
           fmt_double(r.public_bits) + "," + fmt_double(r.metric) + "\n";
  }
  return out;
}

inline std::vector<TrialReport> parse_reports_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw ConfigError("reports csv: unexpected header");
  std::vector<TrialReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string item; std::getline(ls, item, ',');) f.push_back(item);
    if (f.size() != 13) throw ConfigError("reports csv: expected 13 fields in '" + line + "'");
    TrialReport r;
    r.cell = std::stoull(f[0]);
    r.k = std::stoull(f[1]);
    r.ell = static_cast<unsigned>(std::stoul(f[2]));
    r.eps = std::stod(f[3]);
    r.n = std::stoull(f[4]);
    r.trial = std::stoull(f[5]);
    r.seed = std::stoull(f[6]);
    r.decision = f[7];
    r.symbol = std::stoll(f[8]);
    r.correct = f[9] == "1";
    r.players = std::stoull(f[10]);
    r.public_bits = std::stod(f[11]);
    r.metric = std::stod(f[12]);
    out.push_back(r);
  }
  return out;
}

inline void to_json(nlohmann::json& j, const TrialReport& r) {
  j = nlohmann::json{{"cell", r.cell},       {"k", r.k},         {"ell", r.ell},         {"eps", r.eps},
                     {"n", r.n},             {"trial", r.trial}, {"seed", r.seed},       {"decision", r.decision},
                     {"symbol", r.symbol},   {"correct", r.correct}, {"players", r.players},
                     {"public_bits", r.public_bits}, {"metric", r.metric}};
}

inline void from_json(const nlohmann::json& j, TrialReport& r) {
  r.cell = j.at("cell");
  r.k = j.at("k");
  r.ell = j.at("ell");
  r.eps = j.at("eps");
  r.n = j.at("n");
  r.trial = j.at("trial");
  r.seed = j.at("seed");
  r.decision = j.at("decision");
  r.symbol = j.at("symbol");
  r.correct = j.at("correct");
  r.players = j.at("players");
  r.public_bits = j.at("public_bits");
  r.metric = j.at("metric");
}

inline void to_json(nlohmann::json& j, const CellSummary& s) {
  j = nlohmann::json{{"cell", s.cell},
                     {"k", s.coords.k},
                     {"ell", s.coords.ell},
                     {"eps", s.coords.eps},
                     {"n", s.coords.n},
                     {"trials", s.trials},
                     {"successes", s.successes},
                     {"success_rate", s.rate},
                     {"wilson95", {s.wilson_lo, s.wilson_hi}},
                     {"mean_players", s.mean_players},
                     {"mean_public_bits", s.mean_public_bits},
                     {"mean_metric", s.mean_metric}};
  if (s.output_tv >= 0.0) j["output_tv"] = s.output_tv;
}

inline std::string summaries_json(const std::vector<CellSummary>& s) { return nlohmann::json(s).dump(2) + "\n"; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

/// reports.{csv,json}, summary.json and timing.csv (wall clock, not part of the data outputs).
inline void write_results(const ResultSet& rs, const std::filesystem::path& dir, const std::string& format) {
  if (format == "csv") {
    write_text(dir / "reports.csv", reports_csv(rs.reports));
  } else if (format == "json") {
    write_text(dir / "reports.json", nlohmann::json(rs.reports).dump(1) + "\n");
  } else {
    throw ConfigError("format: expected csv or json");
  }
  write_text(dir / "summary.json", summaries_json(rs.summaries));
  std::string timing = "cell,trial,wall_ms\n";
  for (std::size_t i = 0; i < rs.reports.size(); ++i)
    timing += std::to_string(rs.reports[i].cell) + "," + std::to_string(rs.reports[i].trial) + "," + fmt_double(rs.wall_ms[i]) + "\n";
  write_text(dir / "timing.csv", timing);
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationRequest {
  std::string protocol = "l2";  // l2 | smooth | levin | flying-pony | warmup | learn
  double target = 1.0 / 3.0;
  std::vector<std::size_t> k_grid{4, 16};
  unsigned ell = 2;
  double eps = 0.3;
  double gamma = 0.5;  // l2 only
  std::size_t trials = 300;
  std::uint64_t seed = 1;
  double c_min = 0.25;
  double ratio = 1.25;
  std::size_t ladder = 24;
  unsigned workers = 1;
};

struct CellError {
  std::size_t k = 0;
  double null_error = 0.0;
  double far_error = 0.0;
  double upper = 0.0;  // max Wilson upper bound of the two
};

struct CalibrationResult {
  std::string protocol;
  std::string constant;
  bool found = false;
  double value = 0.0;
  std::vector<CellError> errors;  // at value (or at the best candidate when not found)
  double best_upper = 1.0;
};

inline std::string calibrated_constant_name(const std::string& protocol) {
  if (protocol == "l2" || protocol == "smooth") return "c_l2";
  if (protocol == "levin") return "levin_scale";
  if (protocol == "flying-pony") return "c_flying_pony";
  if (protocol == "warmup") return "warmup_c";
  if (protocol == "learn") return "c_learn";
  throw ConfigError("calibrate: unknown protocol id '" + protocol + "'");
}

/// Error rates of one candidate constant on one alphabet size.
inline CellError calibration_cell(const CalibrationRequest& req, double c, std::size_t k, std::size_t cell) {
  std::vector<std::uint8_t> null_ok(req.trials), far_ok(req.trials);
  parallel_for(req.trials, req.workers, [&](std::size_t t) {
    const std::uint64_t seed = derive_seed(req.seed, cell, t);
    Rng g(seed);
    const auto theta = random_signs(k / 2, g);
    if (req.protocol == "l2") {
      const L2TestParams params{k, req.gamma, 1.0 / 3.0};
      const auto n = params.n_req(c);
      null_ok[t] = l2_uniformity_test(multinomial_counts(n, uniform(k), g), params, c).accepted();
      far_ok[t] = l2_uniformity_test(multinomial_counts(n, paninski({k, req.gamma / 2.0, theta}), g), params, c).rejected();
    } else if (req.protocol == "smooth" || req.protocol == "levin" || req.protocol == "warmup") {
      UniformityRequest r;
      r.protocol = uniformity_protocol_from_string(req.protocol);
      r.ell = req.ell;
      r.eps = req.eps;
      r.engine = Engine::aggregate;
      if (req.protocol == "smooth") r.c_l2 = c;
      if (req.protocol == "levin") r.levin_scale = c;
      if (req.protocol == "warmup") r.warmup_c = c;
      null_ok[t] = run_uniformity(Source::direct(uniform(k)), r, derive_seed(seed, 1)).verdict.accepted();
      far_ok[t] = run_uniformity(Source::direct(paninski({k, req.eps, theta})), r, derive_seed(seed, 2)).verdict.rejected();
    } else if (req.protocol == "flying-pony") {
      const auto n = flying_pony_players(k, c);
      null_ok[t] = flying_pony_aggregate(uniform(k), n, g).accepted();
      far_ok[t] = flying_pony_aggregate(flying_pony(k, theta), n, g).rejected();
    } else if (req.protocol == "learn") {
      const auto n = static_cast<std::uint64_t>(std::ceil(c * static_cast<double>(k) / (req.eps * req.eps)));
      const Pmf far = paninski({k, std::min(req.eps, 0.5), theta});
      null_ok[t] = tv(learn_empirical(multinomial_counts(n, uniform(k), g)), uniform(k)) <= req.eps;
      far_ok[t] = tv(learn_empirical(multinomial_counts(n, far, g)), far) <= req.eps;
    } else {
      throw ConfigError("calibrate: unknown protocol id '" + req.protocol + "'");
    }
  });
  std::size_t null_bad = 0, far_bad = 0;
  for (std::size_t t = 0; t < req.trials; ++t) {
    null_bad += !null_ok[t];
    far_bad += !far_ok[t];
  }
  CellError e;
  e.k = k;
  e.null_error = static_cast<double>(null_bad) / static_cast<double>(req.trials);
  e.far_error = static_cast<double>(far_bad) / static_cast<double>(req.trials);
  e.upper = std::max(wilson(null_bad, req.trials).hi, wilson(far_bad, req.trials).hi);
  return e;
}

/// Smallest constant on the ladder c_min * ratio^i whose Wilson upper error bound is within the
/// target on every grid cell.
inline CalibrationResult calibrate_search(const CalibrationRequest& req) {
  if (req.trials < 100) throw ConfigError("calibrate: budget must be at least 100 trials per candidate");
  if (req.k_grid.empty()) throw ConfigError("calibrate: empty grid");
  CalibrationResult res;
  res.protocol = req.protocol;
  res.constant = calibrated_constant_name(req.protocol);
  double best_value = 0.0;
  std::vector<CellError> best_errors;
  for (std::size_t i = 0; i < req.ladder; ++i) {
    const double c = req.c_min * std::pow(req.ratio, static_cast<double>(i));
    std::vector<CellError> errs;
    double worst = 0.0;
    for (std::size_t ci = 0; ci < req.k_grid.size(); ++ci) {
      errs.push_back(calibration_cell(req, c, req.k_grid[ci], ci));
      worst = std::max(worst, errs.back().upper);
    }
    if (worst < res.best_upper || best_errors.empty()) {
      res.best_upper = worst;
      best_value = c;
      best_errors = errs;
    }
    if (worst <= req.target) {
      res.found = true;
      res.value = c;
      res.errors = errs;
      return res;
    }
  }
  res.value = best_value;
  res.errors = best_errors;
  return res;
}

/// calibrate_search that throws CalibrationFailure, naming the best candidate, when nothing passes.
inline CalibrationResult calibrate(const CalibrationRequest& req) {
  auto res = calibrate_search(req);
  if (!res.found) {
    std::string msg = "calibration failure: no " + res.constant + " on the ladder meets target error " +
                      fmt_double(req.target) + "; best " + fmt_double(res.value) + " with Wilson upper error " +
                      fmt_double(res.best_upper);
    for (const auto& e : res.errors)
      msg += "; k=" + std::to_string(e.k) + " null " + fmt_double(e.null_error) + " far " + fmt_double(e.far_error);
    throw CalibrationFailure(msg);
  }
  return res;
}

inline std::string today_utc() {
  const std::time_t t = std::time(nullptr);
  char buf[16];
  std::strftime(buf, sizeof buf, "%Y-%m-%d", std::gmtime(&t));
  return buf;
}

inline nlohmann::json calibration_json(const CalibrationRequest& req, const CalibrationResult& res, Constants base) {
  nlohmann::json errs = nlohmann::json::array();
  for (const auto& e : res.errors)
    errs.push_back({{"k", e.k}, {"null_error", e.null_error}, {"far_error", e.far_error}, {"wilson_upper", e.upper}});
  nlohmann::json cj = base;
  cj[res.constant] = res.value;
  return {{"schema_version", kSchemaVersion},
          {"constants", cj},
          {"provenance",
           {{"protocol", req.protocol},
            {"constant", res.constant},
            {"target_error", req.target},
            {"seed", req.seed},
            {"date", today_utc()},
            {"grid", {{"k", req.k_grid}, {"ell", req.ell}, {"eps", req.eps}, {"gamma", req.gamma}}},
            {"trials_per_candidate", req.trials},
            {"ladder", {{"c_min", req.c_min}, {"ratio", req.ratio}, {"steps", req.ladder}}},
            {"measured", errs}}}};
}

// ---------------------------------------------------------------------------
// Scaling

struct ScalingRequest {
  std::vector<std::string> protocols{"levin", "private-si"};
  std::vector<std::size_t> k_grid{32, 64, 128};
  double eps = 0.3;
  unsigned ell = 2;
  std::size_t trials = 300;
  double target = 2.0 / 3.0;
  std::uint64_t seed = 1;
  std::uint64_t n_cap = 1ULL << 40;
  Constants constants;
  unsigned workers = 1;
  std::uint64_t dummy_n = 1000;
};

struct ScalingRow {
  std::string protocol;
  std::size_t k = 0;
  std::uint64_t min_n = 0;
  double knob = 0.0;  // levin: scale; private-si: blocks; dummy: n
  bool censored = false;
  double null_rate = 0.0;
  double far_rate = 0.0;
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  std::vector<std::pair<std::string, double>> slopes;  // NaN when fewer than two uncensored rows

  double slope(const std::string& protocol) const {
    for (const auto& [p, s] : slopes)
      if (p == protocol) return s;
    return NAN;
  }
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return NAN;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

namespace detail {

struct Rates {
  double null_rate, far_rate;
  bool ok(double target) const { return null_rate >= target && far_rate >= target; }
};

/// Correct-verdict rates with common random numbers: trial t always uses the same seeds.
inline Rates scaling_rates(const ScalingRequest& req, const std::string& protocol, std::size_t k, double knob) {
  std::vector<std::uint8_t> a(req.trials), b(req.trials);
  parallel_for(req.trials, req.workers, [&](std::size_t t) {
    const std::uint64_t seed = derive_seed(req.seed, k, t);
    Rng g(derive_seed(seed, 7));
    const Pmf far = paninski({k, req.eps, random_signs(k / 2, g)});
    if (protocol == "levin") {
      const auto sch = LevinSchedule::make(k, req.ell, req.eps, req.constants.levin, knob);
      a[t] = levin_protocol(Source::direct(uniform(k)), sch, derive_seed(seed, 1)).verdict.accepted();
      b[t] = levin_protocol(Source::direct(far), sch, derive_seed(seed, 2)).verdict.rejected();
    } else if (protocol == "private-si") {
      const auto blocks = static_cast<std::uint64_t>(knob);
      a[t] = private_si_uniformity(Source::direct(uniform(k)), req.ell, req.eps, blocks, derive_seed(seed, 1),
                                   Engine::aggregate, req.constants.c_l2)
                 .verdict.accepted();
      b[t] = private_si_uniformity(Source::direct(far), req.ell, req.eps, blocks, derive_seed(seed, 2), Engine::aggregate,
                                   req.constants.c_l2)
                 .verdict.rejected();
    } else if (protocol == "dummy") {
      a[t] = b[t] = knob >= static_cast<double>(req.dummy_n);
    } else {
      throw ConfigError("scaling: unknown protocol id '" + protocol + "'");
    }
  });
  double x = 0, y = 0;
  for (std::size_t t = 0; t < req.trials; ++t) {
    x += a[t];
    y += b[t];
  }
  return {x / static_cast<double>(req.trials), y / static_cast<double>(req.trials)};
}

}  // namespace detail

inline std::uint64_t scaling_players(const ScalingRequest& req, const std::string& protocol, std::size_t k, double knob) {
  if (protocol == "levin") return LevinSchedule::make(k, req.ell, req.eps, req.constants.levin, knob).total_players();
  if (protocol == "private-si") {
    SiParams sp{k, req.ell, req.eps, SiTask::uniformity, req.constants.c_learn, req.constants.c_l2};
    return static_cast<std::uint64_t>(knob) * sp.block_players();
  }
  return static_cast<std::uint64_t>(knob);
}

/// Smallest knob (hence n) reaching the target on both instances, by bisection: on log scale
/// for the continuous Levin scale, over integers otherwise.
inline ScalingRow minimal_n(const ScalingRequest& req, const std::string& protocol, std::size_t k) {
  ScalingRow row;
  row.protocol = protocol;
  row.k = k;
  const bool continuous = protocol == "levin";
  auto rates = [&](double knob) { return detail::scaling_rates(req, protocol, k, knob); };
  auto players = [&](double knob) { return scaling_players(req, protocol, k, knob); };

  double hi = continuous ? 1.0 : 1.0;
  if (protocol == "private-si")
    hi = static_cast<double>(SiParams{k, req.ell, req.eps, SiTask::uniformity, req.constants.c_learn, req.constants.c_l2}.default_blocks());
  if (protocol == "dummy") hi = 1.0;
  detail::Rates rh = rates(hi);
  while (!rh.ok(req.target)) {
    hi *= 2.0;
    if (players(hi) > req.n_cap) {
      row.censored = true;
      row.knob = hi;
      row.min_n = req.n_cap;
      row.null_rate = rh.null_rate;
      row.far_rate = rh.far_rate;
      return row;
    }
    rh = rates(hi);
  }
  double lo = hi / 2.0;
  if (continuous) {
    while (lo > 1e-6 && rates(lo).ok(req.target)) {
      hi = lo;
      lo /= 2.0;
    }
    rh = rates(hi);
    for (int it = 0; it < 14; ++it) {
      const double mid = std::sqrt(lo * hi);
      const auto rm = rates(mid);
      if (rm.ok(req.target)) {
        hi = mid;
        rh = rm;
      } else {
        lo = mid;
      }
    }
  } else {
    std::uint64_t l = 0, h = static_cast<std::uint64_t>(hi);
    while (h - l > 1) {
      const std::uint64_t mid = l + (h - l) / 2;
      const auto rm = rates(static_cast<double>(mid));
      if (rm.ok(req.target)) {
        h = mid;
        rh = rm;
      } else {
        l = mid;
      }
    }
    hi = static_cast<double>(h);
    rh = rates(hi);
  }
  row.knob = hi;
  row.min_n = players(hi);
  row.null_rate = rh.null_rate;
  row.far_rate = rh.far_rate;
  if (row.min_n > req.n_cap) {
    row.censored = true;
    row.min_n = req.n_cap;
  }
  return row;
}

inline ScalingReport scaling_report(const ScalingRequest& req) {
  if (req.k_grid.size() < 3) throw ConfigError("scaling: need at least 3 values of k");
  ScalingReport rep;
  for (const auto& proto : req.protocols) {
    std::vector<double> xs, ys;
    for (auto k : req.k_grid) {
      rep.rows.push_back(minimal_n(req, proto, k));
      if (!rep.rows.back().censored) {
        xs.push_back(static_cast<double>(k));
        ys.push_back(static_cast<double>(rep.rows.back().min_n));
      }
    }
    rep.slopes.emplace_back(proto, loglog_slope(xs, ys));
  }
  return rep;
}

inline void from_json(const nlohmann::json& j, ScalingRequest& r) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw ConfigError("schema_version: expected " + std::to_string(kSchemaVersion));
  r.protocols = j.value("protocols", r.protocols);
  r.k_grid = j.value("k", r.k_grid);
  r.eps = j.value("eps", r.eps);
  r.ell = j.value("ell", r.ell);
  r.trials = j.value("trials", r.trials);
  r.target = j.value("target", r.target);
  r.seed = j.value("master_seed", r.seed);
  r.n_cap = j.value("n_cap", r.n_cap);
  r.dummy_n = j.value("dummy_n", r.dummy_n);
  if (j.contains("constants")) {
    const auto& c = j.at("constants");
    r.constants = c.is_string() ? load_constants(c.get<std::string>()) : c.get<Constants>();
  }
}

inline std::string scaling_csv(const ScalingReport& rep) {
  std::string out = "protocol,k,min_n,knob,censored,null_rate,far_rate\n";
  for (const auto& r : rep.rows)
    out += r.protocol + "," + std::to_string(r.k) + "," + std::to_string(r.min_n) + "," + fmt_double(r.knob) + "," +
           (r.censored ? "1" : "0") + "," + fmt_double(r.null_rate) + "," + fmt_double(r.far_rate) + "\n";
  return out;
}

inline std::string scaling_slopes_json(const ScalingReport& rep) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [p, s] : rep.slopes) j[p] = std::isnan(s) ? nlohmann::json(nullptr) : nlohmann::json(s);
  return j.dump(2) + "\n";
}

}  // namespace smpsim
