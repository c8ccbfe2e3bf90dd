// Acceptance run: one PASS/FAIL line per criterion. Exit code 0 iff every criterion passes.
//
// usage: acceptance [--seed N] [--out DIR] [--workers N] [--const-file FILE]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "smpsim/smpsim.hpp"

namespace {

using namespace smpsim;

struct Outcome {
  bool pass = false;
  std::string detail;
  std::string data;  // everything the criterion measured, compared byte for byte on rerun
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<Outcome(std::uint64_t)> run;
};

struct Settings {
  unsigned workers = 1;
  Constants constants;
};

Settings g_settings;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string rows_data(const std::vector<CheckRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.suite + "," + r.check + "," + fmt_double(r.value) + "," + (r.pass ? "1" : "0") + "\n";
  return s;
}

std::string rows_detail(const std::vector<CheckRow>& rows) {
  std::string s;
  for (const auto& r : rows) {
    if (!s.empty()) s += "; ";
    s += r.check + "=" + fmt("%.4g", r.value) + (r.pass ? "" : " (FAIL vs " + fmt("%.4g", r.bound) + ")");
  }
  return s;
}

ResultSet experiment(ExperimentConfig cfg) {
  cfg.constants = g_settings.constants;
  return run_experiment(cfg, g_settings.workers);
}

// 1. Exact conditional law of one batch for k <= 4, l = 1.
Outcome simulation_exact(std::uint64_t seed) {
  Rng g(derive_seed(seed, 1));
  std::vector<Pmf> cases;
  for (std::size_t k = 1; k <= 4; ++k) {
    cases.push_back(uniform(k));
    for (int r = 0; r < 10; ++r) cases.push_back(random_pmf(k, g));
    std::vector<double> point(k, 0.0);
    point[k - 1] = 1.0;
    cases.push_back(Pmf(point));
  }
  cases.push_back(Pmf({0.5, 0.0, 0.25, 0.25}));
  double worst = 0.0;
  for (const auto& p : cases) {
    const auto law = exact_batch_law(p, SimLayout(p.k(), 1));
    const auto c = law.conditional();
    for (std::size_t x = 0; x < p.k(); ++x) worst = std::max(worst, std::abs(c[x] - p[x]));
  }
  return {worst <= 1e-12, "max |P(x | declare) - p_x| = " + fmt("%.3g", worst) + " over " + std::to_string(cases.size()) +
                              " pmfs (tol 1e-12)",
          fmt_double(worst) + "\n"};
}

ExperimentConfig simulate_config(std::uint64_t seed, std::vector<std::size_t> ks, std::vector<unsigned> ells,
                                 const std::string& instance, std::size_t trials) {
  ExperimentConfig cfg;
  cfg.protocol = "simulate";
  cfg.instance.name = instance;
  cfg.instance.eps = 0.3;
  cfg.k_grid = std::move(ks);
  cfg.ell_grid = std::move(ells);
  cfg.trials = trials;
  cfg.master_seed = seed;
  cfg.engine = "players";
  return cfg;
}

// 2. TV of 1e5 simulated samples.
Outcome simulation_statistical(std::uint64_t seed) {
  Outcome o{true, "", ""};
  double worst = 0.0;
  for (const char* inst : {"uniform", "paninski"}) {
    const auto rs = experiment(simulate_config(derive_seed(seed, 2), {4, 16, 64}, {1, 2}, inst, 100000));
    for (const auto& s : rs.summaries) {
      worst = std::max(worst, s.output_tv);
      o.pass = o.pass && s.output_tv <= 0.02;
      o.data += std::string(inst) + "," + std::to_string(s.coords.k) + "," + std::to_string(s.coords.ell) + "," +
                fmt_double(s.output_tv) + "\n";
    }
    o.data += reports_csv(rs.reports);
  }
  o.detail = "max TV(empirical, p) = " + fmt("%.4f", worst) + " over 12 cells of 1e5 samples (tol 0.02)";
  return o;
}

// 3. Mean players per sample against 20 ceil(k / (2^l - 1)).
Outcome player_bound(std::uint64_t seed) {
  const auto rs = experiment(simulate_config(derive_seed(seed, 3), {4, 8, 16, 64}, {1, 2, 3}, "uniform", 10000));
  Outcome o{true, "", reports_csv(rs.reports)};
  double worst = 0.0;
  for (const auto& s : rs.summaries) {
    double sq = 0.0;
    for (std::size_t t = 0; t < s.trials; ++t) {
      const double d = static_cast<double>(rs.reports[s.cell * s.trials + t].players) - s.mean_players;
      sq += d * d;
    }
    const double se = std::sqrt(sq / static_cast<double>(s.trials - 1) / static_cast<double>(s.trials));
    const double bound = SimLayout(s.coords.k, s.coords.ell).player_bound();
    worst = std::max(worst, (s.mean_players + 3.0 * se) / bound);
    o.pass = o.pass && s.mean_players + 3.0 * se <= bound;
  }
  o.detail = "max (mean + 3 se) / bound = " + fmt("%.3f", worst) + " over 12 cells of 1e4 samples";
  return o;
}

// 4. rho product formula.
Outcome rho_formula(std::uint64_t seed) {
  const auto rows = run_suite("rho", seed);
  return {all_pass(rows), rows_detail(rows), rows_data(rows)};
}

// 5. Flattening moments.
Outcome flattening(std::uint64_t seed) {
  const auto rows = run_suite("flattening", seed);
  return {all_pass(rows), rows_detail(rows), rows_data(rows)};
}

ExperimentConfig uniformity_config(const std::string& protocol, const std::string& instance, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.protocol = protocol;
  cfg.instance.name = instance;
  cfg.instance.eps = 0.3;
  cfg.k_grid = {16, 64};
  cfg.ell_grid = {1, 2};
  cfg.eps_grid = {0.3};
  cfg.trials = 300;
  cfg.master_seed = seed;
  cfg.engine = "aggregate";
  return cfg;
}

Outcome two_sided(const std::string& protocol, std::uint64_t seed) {
  Outcome o{true, "", ""};
  double worst = 1.0;
  for (const char* inst : {"uniform", "paninski"}) {
    const auto rs = experiment(uniformity_config(protocol, inst, seed));
    for (const auto& s : rs.summaries) {
      worst = std::min(worst, s.rate);
      o.pass = o.pass && s.rate >= 2.0 / 3.0;
    }
    o.data += reports_csv(rs.reports);
  }
  o.detail = "min success rate = " + fmt("%.3f", worst) + " over {u_k, paninski} x k{16,64} x l{1,2}, 300 trials";
  return o;
}

// 6. Smooth protocol.
Outcome smooth_end_to_end(std::uint64_t seed) {
  auto o = two_sided("smooth", derive_seed(seed, 6));
  const auto& K = g_settings.constants;
  o.detail += "; n = " + std::to_string(SmoothSchedule::required_players(64, 2, 0.3, K.c_l2, K.smooth_batches)) +
              " at k=64, l=2";
  return o;
}

// 7. Levin protocol, schedule budget and the subset-deficit claim.
Outcome levin_end_to_end(std::uint64_t seed) {
  auto o = two_sided("levin", derive_seed(seed, 7));
  const auto& K = g_settings.constants;
  double budget = 0.0;
  for (std::size_t k : {16, 64})
    for (unsigned ell : {1u, 2u}) budget = std::max(budget, LevinSchedule::make(k, ell, 0.3, K.levin, K.levin_scale).delta_budget());
  const auto rows = run_suite("levin-lemma", seed);
  const bool claims = rows[1].pass && rows[2].pass && budget < 1.0 / 40.0;
  o.pass = o.pass && claims;
  o.detail += "; sum m_j delta_j = " + fmt("%.4f", budget) + " (< 0.025); " + rows_detail({rows[1], rows[2]});
  o.data += fmt_double(budget) + "\n" + rows_data(rows);
  return o;
}

// 8. Levin's lemma.
Outcome levin_lemma(std::uint64_t seed) {
  const auto rows = run_suite("levin-lemma", seed);
  return {rows[0].pass, rows_detail({rows[0]}), rows_data({rows[0]})};
}

// 9. Scaling separation.
Outcome scaling(std::uint64_t seed) {
  ScalingRequest req;
  req.protocols = {"levin", "private-si", "dummy"};
  req.k_grid = {32, 64, 128};
  req.eps = 0.3;
  req.ell = 2;
  req.trials = 300;
  req.seed = derive_seed(seed, 9);
  req.constants = g_settings.constants;
  req.workers = g_settings.workers;
  const auto rep = scaling_report(req);
  const double lv = rep.slope("levin"), si = rep.slope("private-si"), dm = rep.slope("dummy");
  const bool pass = lv >= 0.8 && lv <= 1.3 && si >= 1.25 && si <= 1.8;
  std::string detail = "slope levin = " + fmt("%.3f", lv) + " (in [0.8, 1.3]), private-si = " + fmt("%.3f", si) +
                       " (in [1.25, 1.8]), dummy = " + fmt("%.3f", dm) + "; min n:";
  for (const auto& r : rep.rows) detail += " " + r.protocol + "@" + std::to_string(r.k) + "=" + std::to_string(r.min_n);
  return {pass, detail, scaling_csv(rep) + scaling_slopes_json(rep)};
}

// 10. Flying pony at k = 256.
Outcome flying_pony_run(std::uint64_t seed) {
  Outcome o{true, "", ""};
  double worst = 1.0;
  for (const char* inst : {"uniform", "flying-pony"}) {
    const std::vector<std::string> modes = std::string(inst) == "uniform"
                                               ? std::vector<std::string>{"plus"}
                                               : std::vector<std::string>{"plus", "minus", "alternating", "alternating-minus"};
    for (const auto& mode : modes) {
      ExperimentConfig cfg;
      cfg.protocol = "flying-pony";
      cfg.instance.name = inst;
      cfg.instance.theta = mode;
      cfg.k_grid = {256};
      cfg.trials = 300;
      cfg.master_seed = derive_seed(seed, 10);
      cfg.engine = "players";
      const auto rs = experiment(cfg);
      worst = std::min(worst, rs.summaries[0].rate);
      o.pass = o.pass && rs.summaries[0].rate >= 2.0 / 3.0;
      o.data += reports_csv(rs.reports);
    }
  }
  o.detail = "min success rate = " + fmt("%.3f", worst) + " on u_256 and 4 sign patterns, n = " +
             std::to_string(flying_pony_players(256, g_settings.constants.c_flying_pony));
  return o;
}

// 11. Lower-bound oracles.
Outcome lower_bound_oracles(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  for (const char* s : {"chi2", "hmatrix", "subgaussian", "paninski-tv"}) {
    auto r = run_suite(s, seed);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return {all_pass(rows), rows_detail(rows), rows_data(rows)};
}

// 12. Identity reduction.
Outcome identity_reduction(std::uint64_t seed) {
  Rng g(derive_seed(seed, 12));
  Outcome o{true, "", ""};
  double worst_null = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Pmf q = random_granular_pmf(8, g);
    const auto map = build_map(q);
    const Sampler sq(q);
    Counts c(map.m(), 0);
    for (int t = 0; t < 100000; ++t) ++c[map.map_sample(sq(g), g)];
    const double d = tv(learn_empirical(c), uniform(map.m()));
    worst_null = std::max(worst_null, d);
    o.data += fmt_double(d) + "\n";
  }
  const Pmf q = two_level_product(32, 0.3);
  const auto map = build_map(q);
  const Pmf p = relative_paninski(q, 0.3, random_signs(16, g));
  const Sampler sp(p);
  Counts c(map.m(), 0);
  for (int t = 0; t < 100000; ++t) ++c[map.map_sample(sp(g), g)];
  const double far = tv(learn_empirical(c), uniform(map.m()));
  o.data += fmt_double(far) + "\n";

  double worst_rate = 1.0;
  for (const char* inst : {"two-level", "relative-paninski"}) {
    ExperimentConfig cfg;
    cfg.protocol = "identity";
    cfg.inner_protocol = "smooth";
    cfg.instance.name = inst;
    cfg.instance.eps = 0.3;
    cfg.reference.name = "two-level";
    cfg.k_grid = {32};
    cfg.ell_grid = {2};
    cfg.eps_grid = {0.3};
    cfg.trials = 300;
    cfg.master_seed = derive_seed(seed, 121);
    cfg.engine = "aggregate";
    const auto rs = experiment(cfg);
    worst_rate = std::min(worst_rate, rs.summaries[0].rate);
    o.data += reports_csv(rs.reports);
  }
  o.pass = worst_null <= 0.02 && far >= 0.12 && worst_rate >= 2.0 / 3.0;
  o.detail = "max null TV = " + fmt("%.4f", worst_null) + " (tol 0.02); far TV = " + fmt("%.4f", far) +
             " (>= 0.12); end-to-end min success = " + fmt("%.3f", worst_rate) + " (>= 2/3)";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  std::uint64_t seed = 20240601;
  std::string out, const_file;
  app.add_option("--seed", seed);
  app.add_option("--out", out, "directory for per-criterion data files");
  app.add_option("--workers", g_settings.workers);
  app.add_option("--const-file", const_file);
  CLI11_PARSE(app, argc, argv);
  if (!const_file.empty()) g_settings.constants = load_constants(const_file);

  const std::vector<Criterion> criteria{
      {1, "simulation exactness (exact)", 1, simulation_exact},
      {2, "simulation exactness (statistical)", 120, simulation_statistical},
      {3, "player-count bound", 120, player_bound},
      {4, "rho formula", 5, rho_formula},
      {5, "flattening moments", 60, flattening},
      {6, "smooth protocol end-to-end", 300, smooth_end_to_end},
      {7, "levin protocol end-to-end", 600, levin_end_to_end},
      {8, "levin lemma", 5, levin_lemma},
      {9, "scaling separation", 1800, scaling},
      {10, "flying pony", 60, flying_pony_run},
      {11, "lower-bound oracles", 60, lower_bound_oracles},
      {12, "identity reduction", 180, identity_reduction},
  };

  int failures = 0;
  std::vector<std::string> first_data;
  auto report = [&](int id, const std::string& name, bool pass, const std::string& detail, double secs) {
    std::printf("[%s] %2d %s: %s (%.2f s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), secs);
    std::fflush(stdout);
    failures += !pass;
  };
  auto run_one = [&](const Criterion& c, Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run(seed);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what(), ""};
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  for (const auto& c : criteria) {
    Outcome o;
    const double secs = run_one(c, o);
    const bool in_time = secs < c.limit_s;
    report(c.id, c.name, o.pass && in_time,
           o.detail + (in_time ? "" : "; over the " + fmt("%.0f", c.limit_s) + " s limit"), secs);
    first_data.push_back(o.data);
    if (!out.empty()) write_text(std::filesystem::path(out) / ("criterion" + std::to_string(c.id) + ".txt"), o.data);
  }

  // 13. Rerun everything with the same seed and compare the data byte for byte.
  const auto t0 = std::chrono::steady_clock::now();
  std::string mismatched;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    run_one(criteria[i], o);
    if (o.data != first_data[i] || first_data[i].empty()) mismatched += " " + std::to_string(criteria[i].id);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(13, "determinism", mismatched.empty(),
         mismatched.empty() ? "criteria 1-12 rerun with the same seed gave byte-identical data"
                            : "data differs on rerun for criteria" + mismatched,
         secs);

  std::printf("%d of 13 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
