// smpsim command line front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smpsim/smpsim.hpp"

namespace {

using namespace smpsim;

constexpr int kExitAssertion = 2;
constexpr int kExitConfig = 3;

struct Common {
  std::uint64_t seed = 1;
  std::string out;
  unsigned workers = 1;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output directory (default: print to stdout)");
  cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

void emit(const ResultSet& rs, const Common& c) {
  if (!c.out.empty()) {
    write_results(rs, c.out, c.format);
    std::cerr << "wrote " << c.out << "\n";
  } else {
    std::cout << (c.format == "csv" ? reports_csv(rs.reports) : nlohmann::json(rs.reports).dump(1) + "\n");
  }
  std::cerr << summaries_json(rs.summaries);
}

Constants constants_from(const std::string& path) { return path.empty() ? Constants{} : load_constants(path); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simultaneous-message-passing simulator for distributed simulation and testing"};
  app.require_subcommand(1);

  // simulate
  Common sim_c;
  std::size_t sim_k = 8, sim_count = 1000;
  unsigned sim_ell = 1;
  std::string sim_dist = "uniform";
  auto* sim = app.add_subcommand("simulate", "draw samples of p at the referee");
  add_common(sim, sim_c);
  sim->add_option("--k", sim_k)->required();
  sim->add_option("--ell", sim_ell)->required();
  sim->add_option("--dist", sim_dist, "uniform | paninski:<eps>[:<theta>] | flying-pony[:<theta>] | <pmf.json>");
  sim->add_option("--count", sim_count);

  // infer
  Common inf_c;
  std::string inf_task = "uniformity", inf_dist = "uniform", inf_engine = "players", inf_consts;
  std::size_t inf_k = 16, inf_trials = 10;
  unsigned inf_ell = 1;
  double inf_eps = 0.3;
  std::uint64_t inf_players = 0;
  auto* inf = app.add_subcommand("infer", "private-coin simulate-and-infer (and the flying-pony protocol)");
  add_common(inf, inf_c);
  inf->add_option("--task", inf_task)->check(CLI::IsMember({"learn", "uniformity", "flying-pony"}));
  inf->add_option("--k", inf_k)->required();
  inf->add_option("--ell", inf_ell);
  inf->add_option("--eps", inf_eps);
  inf->add_option("--players", inf_players, "blocks for learn/uniformity, players for flying-pony; 0 = default");
  inf->add_option("--trials", inf_trials);
  inf->add_option("--dist", inf_dist);
  inf->add_option("--engine", inf_engine)->check(CLI::IsMember({"players", "aggregate"}));
  inf->add_option("--const-file", inf_consts);

  // test-uniformity
  Common tu_c;
  std::string tu_proto = "smooth", tu_dist = "uniform", tu_engine = "aggregate", tu_consts;
  std::size_t tu_k = 16, tu_trials = 10;
  unsigned tu_ell = 1;
  double tu_eps = 0.3;
  std::uint64_t tu_players = 0;
  auto* tu = app.add_subcommand("test-uniformity", "public-coin uniformity testing");
  add_common(tu, tu_c);
  tu->add_option("--protocol", tu_proto)->check(CLI::IsMember({"smooth", "levin", "warmup", "private-si"}));
  tu->add_option("--k", tu_k)->required();
  tu->add_option("--ell", tu_ell);
  tu->add_option("--eps", tu_eps);
  tu->add_option("--players", tu_players, "players (blocks for private-si); 0 = default");
  tu->add_option("--trials", tu_trials);
  tu->add_option("--dist", tu_dist);
  tu->add_option("--engine", tu_engine)->check(CLI::IsMember({"players", "aggregate"}));
  tu->add_option("--const-file", tu_consts);

  // test-identity
  Common ti_c;
  std::string ti_q, ti_dist, ti_proto = "smooth", ti_engine = "aggregate", ti_consts;
  std::size_t ti_k = 16, ti_trials = 10;
  unsigned ti_ell = 1;
  double ti_eps = 0.3;
  std::uint64_t ti_players = 0;
  auto* ti = app.add_subcommand("test-identity", "identity testing against q by reduction to uniformity over [5k]");
  add_common(ti, ti_c);
  ti->add_option("--q", ti_q, "reference pmf: <pmf.json> or two-level:<w>")->required();
  ti->add_option("--dist", ti_dist, "p (default: q itself)");
  ti->add_option("--k", ti_k)->required();
  ti->add_option("--ell", ti_ell);
  ti->add_option("--eps", ti_eps);
  ti->add_option("--protocol", ti_proto)->check(CLI::IsMember({"smooth", "levin", "warmup", "private-si"}));
  ti->add_option("--players", ti_players);
  ti->add_option("--trials", ti_trials);
  ti->add_option("--engine", ti_engine)->check(CLI::IsMember({"players", "aggregate"}));
  ti->add_option("--const-file", ti_consts);

  // verify
  Common ver_c;
  std::string ver_suite = "all";
  auto* ver = app.add_subcommand("verify", "oracle suites with residuals");
  add_common(ver, ver_c);
  std::vector<std::string> suites = suite_names();
  suites.push_back("all");
  ver->add_option("--suite", ver_suite)->check(CLI::IsMember(suites));

  // calibrate
  Common cal_c;
  CalibrationRequest cal;
  std::string cal_base;
  auto* calc = app.add_subcommand("calibrate", "fit a protocol constant on a geometric ladder");
  add_common(calc, cal_c);
  calc->add_option("--protocol", cal.protocol)->check(CLI::IsMember({"l2", "smooth", "levin", "flying-pony", "warmup", "learn"}));
  calc->add_option("--target", cal.target);
  calc->add_option("--k", cal.k_grid, "grid of alphabet sizes (L for l2)");
  calc->add_option("--ell", cal.ell);
  calc->add_option("--eps", cal.eps);
  calc->add_option("--gamma", cal.gamma);
  calc->add_option("--budget", cal.trials, "trials per candidate and instance");
  calc->add_option("--c-min", cal.c_min);
  calc->add_option("--ratio", cal.ratio);
  calc->add_option("--steps", cal.ladder);
  calc->add_option("--const-file", cal_base, "constants to start from");

  // experiment / scaling
  Common exp_c;
  std::string exp_cfg;
  auto* expc = app.add_subcommand("experiment", "run a JSON experiment config");
  add_common(expc, exp_c);
  expc->add_option("--config", exp_cfg)->required();

  Common sc_c;
  std::string sc_cfg;
  auto* scc = app.add_subcommand("scaling", "minimal-n search and log-log slopes");
  add_common(scc, sc_c);
  scc->add_option("--config", sc_cfg)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) {
      const Pmf p = parse_dist(sim_dist).make(sim_k, sim_c.seed);
      const auto outs = simulate_batch_of_samples(p, sim_ell, sim_count, sim_c.seed);
      std::string csv = "trial,symbol,players_used,batches_used\n";
      for (std::size_t i = 0; i < outs.size(); ++i)
        csv += std::to_string(i) + "," + std::to_string(outs[i].symbol) + "," + std::to_string(outs[i].players_used) + "," +
               std::to_string(outs[i].batches_used) + "\n";
      if (sim_c.out.empty())
        std::cout << csv;
      else
        write_text(std::filesystem::path(sim_c.out) / "samples.csv", csv);
      return 0;
    }
    if (*inf) {
      ExperimentConfig cfg;
      cfg.protocol = inf_task == "uniformity" ? "private-si" : inf_task;
      cfg.instance = parse_dist(inf_dist);
      cfg.k_grid = {inf_k};
      cfg.ell_grid = {inf_ell};
      cfg.eps_grid = {inf_eps};
      cfg.n_grid = {inf_players};
      cfg.trials = inf_trials;
      cfg.master_seed = inf_c.seed;
      cfg.engine = inf_engine;
      cfg.constants = constants_from(inf_consts);
      emit(run_experiment(cfg, inf_c.workers), inf_c);
      return 0;
    }
    if (*tu) {
      ExperimentConfig cfg;
      cfg.protocol = tu_proto;
      cfg.instance = parse_dist(tu_dist);
      cfg.k_grid = {tu_k};
      cfg.ell_grid = {tu_ell};
      cfg.eps_grid = {tu_eps};
      cfg.n_grid = {tu_players};
      cfg.trials = tu_trials;
      cfg.master_seed = tu_c.seed;
      cfg.engine = tu_engine;
      cfg.constants = constants_from(tu_consts);
      emit(run_experiment(cfg, tu_c.workers), tu_c);
      return 0;
    }
    if (*ti) {
      ExperimentConfig cfg;
      cfg.protocol = "identity";
      cfg.inner_protocol = ti_proto;
      cfg.reference = parse_dist(ti_q);
      cfg.instance = ti_dist.empty() ? cfg.reference : parse_dist(ti_dist);
      cfg.k_grid = {ti_k};
      cfg.ell_grid = {ti_ell};
      cfg.eps_grid = {ti_eps};
      cfg.n_grid = {ti_players};
      cfg.trials = ti_trials;
      cfg.master_seed = ti_c.seed;
      cfg.engine = ti_engine;
      cfg.constants = constants_from(ti_consts);
      emit(run_experiment(cfg, ti_c.workers), ti_c);
      return 0;
    }
    if (*ver) {
      std::vector<CheckRow> rows;
      for (const auto& s : suite_names())
        if (ver_suite == "all" || ver_suite == s) {
          auto r = run_suite(s, ver_c.seed);
          rows.insert(rows.end(), r.begin(), r.end());
        }
      std::printf("%-12s %-44s %14s %14s  %s\n", "suite", "check", "value", "bound", "result");
      for (const auto& r : rows)
        std::printf("%-12s %-44s %14.6g %14.6g  %s\n", r.suite.c_str(), r.check.c_str(), r.value, r.bound,
                    r.pass ? "PASS" : "FAIL");
      return all_pass(rows) ? 0 : kExitAssertion;
    }
    if (*calc) {
      cal.seed = cal_c.seed;
      cal.workers = cal_c.workers;
      const auto res = calibrate(cal);
      const auto j = calibration_json(cal, res, constants_from(cal_base));
      if (cal_c.out.empty())
        std::cout << j.dump(2) << "\n";
      else
        write_text(std::filesystem::path(cal_c.out) / "calibrated.json", j.dump(2) + "\n");
      return 0;
    }
    if (*expc) {
      ExperimentConfig cfg = load_experiment(exp_cfg);
      if (!exp_c.out.empty()) cfg.output = exp_c.out;
      Common c = exp_c;
      c.out = cfg.output;
      emit(run_experiment(cfg, exp_c.workers), c);
      return 0;
    }
    if (*scc) {
      ScalingRequest req;
      try {
        req = read_json_file(sc_cfg).get<ScalingRequest>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad scaling config: ") + e.what());
      }
      req.workers = sc_c.workers;
      const auto rep = scaling_report(req);
      if (sc_c.out.empty()) {
        std::cout << scaling_csv(rep) << scaling_slopes_json(rep);
      } else {
        write_text(std::filesystem::path(sc_c.out) / "scaling.csv", scaling_csv(rep));
        write_text(std::filesystem::path(sc_c.out) / "slopes.json", scaling_slopes_json(rep));
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CalibrationFailure& e) {
    std::cerr << e.what() << "\n";
    return kExitAssertion;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
