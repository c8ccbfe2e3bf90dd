#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "smpsim/harness.hpp"

using namespace smpsim;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.protocol = "smooth";
  c.instance.name = "paninski";
  c.k_grid = {16, 32};
  c.ell_grid = {1, 2};
  c.trials = 10;
  c.master_seed = 99;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("smpsim_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Experiment, ReportCounts) {
  ExperimentConfig one;
  one.trials = 1;
  const auto a = run_experiment(one);
  EXPECT_EQ(a.reports.size(), 1u);
  EXPECT_EQ(a.summaries.size(), 1u);

  const auto b = run_experiment(small_config());
  EXPECT_EQ(b.reports.size(), 40u);
  EXPECT_EQ(b.summaries.size(), 4u);
  for (const auto& s : b.summaries) {
    EXPECT_EQ(s.trials, 10u);
    EXPECT_LE(s.wilson_lo, s.rate);
    EXPECT_GE(s.wilson_hi, s.rate);
  }
}

TEST(Experiment, ByteIdenticalAndWorkerIndependent) {
  const auto cfg = small_config();
  const auto a = reports_csv(run_experiment(cfg, 1).reports);
  const auto b = reports_csv(run_experiment(cfg, 1).reports);
  const auto c = reports_csv(run_experiment(cfg, 3).reports);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  auto other = cfg;
  other.master_seed = 100;
  EXPECT_NE(a, reports_csv(run_experiment(other).reports));
}

TEST(Experiment, CsvRoundTrip) {
  auto cfg = small_config();
  cfg.protocol = "simulate";
  cfg.instance.name = "uniform";
  const auto rs = run_experiment(cfg);
  const auto text = reports_csv(rs.reports);
  EXPECT_EQ(text.substr(0, text.find('\n')), kReportHeader);
  EXPECT_EQ(parse_reports_csv(text), rs.reports);
  const nlohmann::json j = rs.reports;
  EXPECT_EQ(j.get<std::vector<TrialReport>>(), rs.reports);
}

TEST(Experiment, WriteResults) {
  const auto dir = temp_dir("write");
  const auto rs = run_experiment(small_config());
  write_results(rs, dir, "csv");
  EXPECT_TRUE(std::filesystem::exists(dir / "reports.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "timing.csv"));
  EXPECT_EQ(slurp(dir / "reports.csv"), reports_csv(rs.reports));
  write_results(rs, dir, "json");
  EXPECT_TRUE(std::filesystem::exists(dir / "reports.json"));
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "summary.json")).size(), 4u);
}

TEST(Experiment, EveryProtocolRuns) {
  for (const std::string proto : {"simulate", "learn", "private-si", "smooth", "levin", "warmup", "flying-pony", "identity"}) {
    ExperimentConfig c;
    c.protocol = proto;
    c.instance.name = proto == "flying-pony" ? "flying-pony" : proto == "identity" ? "two-level" : "uniform";
    c.k_grid = {16};
    c.ell_grid = {2};
    c.trials = 3;
    const auto rs = run_experiment(c);
    ASSERT_EQ(rs.reports.size(), 3u) << proto;
    EXPECT_GT(rs.reports[0].players, 0u) << proto;
  }
}

TEST(Config, ValidationErrorsNameTheKey) {
  auto c = small_config();
  c.protocol = "telepathy";
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("protocol"), std::string::npos);
  }
  c = small_config();
  c.engine = "gpu";
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.k_grid.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.schema_version = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST(Config, JsonFileAndOverrides) {
  const auto dir = temp_dir("config");
  write_text(dir / "consts.json", R"({"constants": {"c_l2": 9.5, "levin_c1": 3}})");
  const std::string cfg_text = R"({"schema_version": 1, "protocol": "levin",
    "instance": {"name": "paninski", "eps": 0.25, "theta": "plus"},
    "grid": {"k": [8, 16], "ell": [2], "eps": [0.3], "n": [0]},
    "trials": 5, "master_seed": 7, "constants": ")" +
                               (dir / "consts.json").string() + R"(", "constant_overrides": {"levin_c2": 2}})";
  write_text(dir / "exp.json", cfg_text);
  const auto c = load_experiment((dir / "exp.json").string());
  EXPECT_EQ(c.protocol, "levin");
  EXPECT_EQ(c.cells().size(), 2u);
  EXPECT_EQ(c.instance.theta, "plus");
  EXPECT_DOUBLE_EQ(c.constants.c_l2, 9.5);
  EXPECT_DOUBLE_EQ(c.constants.levin.c1, 3.0);
  EXPECT_DOUBLE_EQ(c.constants.levin.c2, 2.0);
  EXPECT_DOUBLE_EQ(c.constants.levin.c3, LevinConstants{}.c3);

  write_text(dir / "bad.json", R"({"schema_version": 1, "protocol": "nope"})");
  EXPECT_THROW(load_experiment((dir / "bad.json").string()), ConfigError);
  write_text(dir / "nover.json", R"({"protocol": "smooth"})");
  EXPECT_THROW(load_experiment((dir / "nover.json").string()), ConfigError);
  write_text(dir / "broken.json", "{");
  EXPECT_THROW(load_experiment((dir / "broken.json").string()), ConfigError);
  EXPECT_THROW(load_experiment((dir / "missing.json").string()), ConfigError);
}

TEST(Instances, ParseDist) {
  auto s = parse_dist("paninski:0.2:minus");
  EXPECT_EQ(s.name, "paninski");
  EXPECT_DOUBLE_EQ(s.eps, 0.2);
  const Pmf p = s.make(8, 1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[2 * i], 0.125 * (1 - 2 * 0.2), 1e-15);
  EXPECT_EQ(parse_dist("two-level:0.4").weight, 0.4);
  EXPECT_EQ(parse_dist("flying-pony:alternating").theta, "alternating");
  EXPECT_EQ(parse_dist("some/file.json").name, "file");
  EXPECT_THROW(parse_dist("paninski:abc"), ConfigError);
  EXPECT_THROW(parse_dist("paninski:0.1:sideways"), ConfigError);
  EXPECT_EQ(make_theta(ThetaMode::alternating, 4, 0), (std::vector<int>{1, -1, 1, -1}));
  EXPECT_EQ(make_theta(ThetaMode::random, 16, 5), make_theta(ThetaMode::random, 16, 5));
}

TEST(Wilson, KnownIntervals) {
  auto w = wilson(5, 10);
  EXPECT_NEAR(w.lo, 0.2365896, 1e-6);
  EXPECT_NEAR(w.hi, 0.7634104, 1e-6);
  w = wilson(0, 100);
  EXPECT_EQ(w.lo, 0.0);
  EXPECT_NEAR(w.hi, 0.0369948, 1e-6);
  w = wilson(0, 0);
  EXPECT_EQ(w.lo, 0.0);
  EXPECT_EQ(w.hi, 1.0);
}

TEST(ParallelFor, CoversEveryIndexOnce) {
  for (unsigned workers : {1u, 2u, 7u}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
    for (int h : hits) EXPECT_EQ(h, 1);
  }
  EXPECT_THROW(parallel_for(10, 2, [](std::size_t i) {
                 if (i == 5) throw InvalidArgument("boom");
               }),
               InvalidArgument);
}

TEST(Calibration, FindsConstantAndRecordsProvenance) {
  CalibrationRequest req;
  req.protocol = "l2";
  req.k_grid = {4, 16};
  req.trials = 100;
  req.c_min = 0.5;
  req.ratio = 1.5;
  req.ladder = 12;
  const auto res = calibrate(req);
  EXPECT_TRUE(res.found);
  EXPECT_EQ(res.constant, "c_l2");
  for (const auto& e : res.errors) EXPECT_LE(e.upper, req.target);
  const auto j = calibration_json(req, res, Constants{});
  EXPECT_DOUBLE_EQ(j.at("constants").at("c_l2").get<double>(), res.value);
  EXPECT_EQ(j.at("provenance").at("seed").get<std::uint64_t>(), req.seed);
  EXPECT_EQ(j.at("provenance").at("measured").size(), 2u);
  EXPECT_EQ(j.get<Constants>().c_l2, res.value);
}

TEST(Calibration, ImpossibleTargetFails) {
  CalibrationRequest req;
  req.protocol = "flying-pony";
  req.k_grid = {16};
  req.target = 0.0;
  req.trials = 100;
  req.ladder = 3;
  try {
    calibrate(req);
    FAIL() << "expected CalibrationFailure";
  } catch (const CalibrationFailure& e) {
    EXPECT_NE(std::string(e.what()).find("best"), std::string::npos);
  }
  req.trials = 50;
  EXPECT_THROW(calibrate(req), ConfigError);
  req.trials = 100;
  req.protocol = "astrology";
  EXPECT_THROW(calibrate(req), ConfigError);
}

TEST(Scaling, SlopeAndDummy) {
  EXPECT_NEAR(loglog_slope({1, 2, 4}, {3, 12, 48}), 2.0, 1e-12);
  EXPECT_TRUE(std::isnan(loglog_slope({1}, {1})));
  ScalingRequest req;
  req.protocols = {"dummy"};
  req.k_grid = {8, 16, 32};
  req.trials = 10;
  const auto rep = scaling_report(req);
  ASSERT_EQ(rep.rows.size(), 3u);
  for (const auto& r : rep.rows) EXPECT_EQ(r.min_n, 1000u);
  EXPECT_NEAR(rep.slope("dummy"), 0.0, 1e-12);
  req.k_grid = {8, 16};
  EXPECT_THROW(scaling_report(req), ConfigError);
  const auto csv = scaling_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "protocol,k,min_n,knob,censored,null_rate,far_rate");
}

TEST(Scaling, CensoredAtCap) {
  ScalingRequest req;
  req.protocols = {"private-si"};
  req.k_grid = {16};
  req.trials = 20;
  req.n_cap = 1000;
  const auto row = minimal_n(req, "private-si", 16);
  EXPECT_TRUE(row.censored);
  EXPECT_EQ(row.min_n, 1000u);
}

TEST(Scaling, JsonRequest) {
  const auto j = nlohmann::json::parse(R"({"schema_version": 1, "protocols": ["dummy"], "k": [4, 8, 16], "trials": 5,
                                            "constants": {"c_l2": 7}})");
  const auto r = j.get<ScalingRequest>();
  EXPECT_EQ(r.k_grid.size(), 3u);
  EXPECT_EQ(r.constants.c_l2, 7.0);
  EXPECT_THROW(nlohmann::json::parse(R"({"protocols": ["dummy"]})").get<ScalingRequest>(), ConfigError);
}

TEST(Constants, ShippedFileMatchesDefaultsAndCalibration) {
  const Constants c = load_constants(SMPSIM_CONSTANTS_FILE);
  EXPECT_EQ(nlohmann::json(c), nlohmann::json(Constants{}));
  const auto j = read_json_file(SMPSIM_CONSTANTS_FILE);
  ASSERT_TRUE(j.contains("calibration"));
  for (const auto& [protocol, rec] : j.at("calibration").items()) {
    const std::string name = rec.at("constant").get<std::string>();
    EXPECT_GE(j.at("constants").at(name).get<double>(), rec.at("calibrated_minimum").get<double>()) << protocol;
    for (const auto& m : rec.at("measured")) EXPECT_LE(m.at("wilson_upper").get<double>(), 1.0 / 3.0) << protocol;
  }
}
