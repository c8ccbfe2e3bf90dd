#include <gtest/gtest.h>

#include <cmath>

#include "smpsim/infer.hpp"

using namespace smpsim;

TEST(SiParams, Sizes) {
  SiParams learn{8, 1, 0.25, SiTask::learn};
  EXPECT_EQ(learn.psi(), 256u);
  EXPECT_EQ(learn.default_blocks(), 4u * 256 + 9);
  EXPECT_EQ(learn.block_players(), 10u * 32);
  SiParams uni{16, 2, 0.3, SiTask::uniformity};
  EXPECT_EQ(uni.psi(), centralized_n_req(16, 0.3));
  EXPECT_EQ(uni.block_players(), 10u * 4 * 6);
  EXPECT_THROW((SiParams{1, 1, 0.3}.psi()), InvalidArgument);
  EXPECT_THROW((SiParams{4, 1, 0.0}.psi()), InvalidArgument);
  EXPECT_EQ(engine_from_string("aggregate"), Engine::aggregate);
  EXPECT_THROW(engine_from_string("fast"), InvalidArgument);
}

TEST(SiParams, BlockSucceedsWithProbabilityAtLeastHalf) {
  Rng g(1);
  for (std::size_t k : {2, 8, 33, 100})
    for (unsigned ell : {1u, 2u, 4u})
      for (int i = 0; i < 5; ++i) EXPECT_GE(block_success_probability(random_pmf(k, g), ell), 0.5);
}

TEST(SimulateAndInfer, Learning) {
  const SiParams prm{8, 1, 0.25, SiTask::learn};
  Rng g(2);
  int good = 0;
  const int trials = 60;
  for (int t = 0; t < trials; ++t) {
    const Pmf p = random_pmf(8, g);
    const SiResult r = simulate_and_infer(p, prm, prm.default_blocks(), g);
    ASSERT_EQ(r.verdict.decision, Decision::estimate);
    ASSERT_TRUE(r.estimate.has_value());
    EXPECT_EQ(r.players_used, prm.default_players());
    good += tv(*r.estimate, p) <= 0.25;
  }
  EXPECT_GE(good, trials * 2 / 3);
}

TEST(SimulateAndInfer, UniformityBothEngines) {
  const SiParams prm{16, 2, 0.3, SiTask::uniformity};
  for (Engine e : {Engine::players, Engine::aggregate}) {
    Rng g(3);
    int acc = 0, rej = 0;
    const int trials = 150;
    for (int t = 0; t < trials; ++t) {
      acc += simulate_and_infer(uniform(16), prm, prm.default_blocks(), g, e).verdict.accepted();
      const Pmf far = paninski({16, 0.3, random_signs(8, g)});
      rej += simulate_and_infer(far, prm, prm.default_blocks(), g, e).verdict.rejected();
    }
    EXPECT_GE(acc, trials * 2 / 3);
    EXPECT_GE(rej, trials * 2 / 3);
  }
}

TEST(SimulateAndInfer, TooFewBlocksIsInconclusive) {
  const SiParams prm{16, 1, 0.3, SiTask::uniformity};
  Rng g(4);
  const SiResult r = simulate_and_infer(uniform(16), prm, 5, g);
  EXPECT_EQ(r.verdict.decision, Decision::inconclusive);
  EXPECT_EQ(r.verdict.diagnostic("psi"), static_cast<double>(prm.psi()));
  EXPECT_THROW(simulate_and_infer(uniform(8), prm, 5, g), InvalidArgument);
}

TEST(SimulateAndInfer, EnginesAgreeOnSuccessCount) {
  // Mean number of simulated samples per block under both engines.
  const Pmf p({0.4, 0.3, 0.2, 0.05, 0.05});
  const SiParams prm{5, 1, 0.5, SiTask::learn};
  const double want = block_success_probability(p, 1);
  for (Engine e : {Engine::players, Engine::aggregate}) {
    Rng g(5);
    double s = 0;
    for (int t = 0; t < 200; ++t) s += static_cast<double>(simulate_and_infer(p, prm, 100, g, e).successes);
    EXPECT_NEAR(s / (200 * 100), want, 0.01);
  }
}

TEST(FlyingPony, DecisionWindow) {
  // k=4, n=40: accept iff 5 < ones <= 15
  EXPECT_FALSE(flying_pony_decide(5, 40, 4).accepted());
  EXPECT_TRUE(flying_pony_decide(6, 40, 4).accepted());
  EXPECT_TRUE(flying_pony_decide(15, 40, 4).accepted());
  EXPECT_FALSE(flying_pony_decide(16, 40, 4).accepted());
  EXPECT_FALSE(flying_pony_decide(0, 40, 4).accepted());
  EXPECT_EQ(flying_pony_players(256), 10240u);
}

TEST(FlyingPony, ProtocolAndAggregate) {
  const std::size_t k = 256;
  const std::uint64_t n = flying_pony_players(k);
  Rng g(6);
  std::vector<std::vector<int>> patterns{std::vector<int>(128, 1), std::vector<int>(128, -1), random_signs(128, g)};
  int acc = 0, agg_acc = 0;
  std::vector<int> rej(patterns.size(), 0), agg_rej(patterns.size(), 0);
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    acc += flying_pony_protocol(uniform(k), n, 1000 + t).verdict.accepted();
    agg_acc += flying_pony_aggregate(uniform(k), n, g).accepted();
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      const Pmf p = flying_pony(k, patterns[i]);
      rej[i] += flying_pony_protocol(p, n, 5000 + t).verdict.rejected();
      agg_rej[i] += flying_pony_aggregate(p, n, g).rejected();
    }
  }
  EXPECT_GE(acc, trials * 2 / 3);
  EXPECT_GE(agg_acc, trials * 2 / 3);
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    EXPECT_GE(rej[i], trials * 2 / 3);
    EXPECT_GE(agg_rej[i], trials * 2 / 3);
  }
}
