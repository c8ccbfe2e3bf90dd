#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "smpsim/public_uniformity.hpp"

using namespace smpsim;

namespace {

double accept_rate(const std::function<PublicRun(std::uint64_t)>& run, int trials) {
  int a = 0;
  for (int t = 0; t < trials; ++t) a += run(static_cast<std::uint64_t>(t) + 1).verdict.accepted();
  return static_cast<double>(a) / trials;
}

}  // namespace

TEST(Partitions, BalancedAssignmentsAreUniform) {
  // k=4, L=2: six labeled balanced assignments, each with frequency 1/6.
  Rng g(1);
  std::map<std::vector<std::uint32_t>, int> freq;
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    const Partition p = random_balanced_partition(4, 2, g);
    ASSERT_TRUE(p.balanced());
    std::vector<std::uint32_t> key;
    for (Symbol x = 0; x < 4; ++x) key.push_back(p.part_of(x));
    ++freq[key];
  }
  EXPECT_EQ(freq.size(), 6u);
  for (const auto& [key, c] : freq) EXPECT_NEAR(c / static_cast<double>(n), 1.0 / 6.0, 0.01);
}

TEST(Partitions, UnevenSizes) {
  Rng g(2);
  const Partition p = random_balanced_partition(7, 3, g);
  auto sizes = p.part_sizes();
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 3}));
  EXPECT_THROW(random_balanced_partition(3, 4, g), InvalidArgument);
}

TEST(Subsets, UniformAndSorted) {
  Rng g(3);
  std::map<std::vector<Symbol>, int> freq;
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    const SubsetSpec s = random_subset(4, 2, g);
    ++freq[std::vector<Symbol>(s.members().begin(), s.members().end())];
  }
  EXPECT_EQ(freq.size(), 6u);
  for (const auto& [m, c] : freq) {
    EXPECT_LT(m[0], m[1]);
    EXPECT_NEAR(c / static_cast<double>(n), 1.0 / 6.0, 0.01);
  }
}

TEST(Subsets, ReportStrategy) {
  const SubsetSpec S(4, {1, 3});
  const MessageMap w = subset_report_strategy(S, 2);
  EXPECT_EQ(w.deterministic_message(0), 0u);
  EXPECT_EQ(w.deterministic_message(1), 1u);
  EXPECT_EQ(w.deterministic_message(2), 0u);
  EXPECT_EQ(w.deterministic_message(3), 2u);
  for (Symbol x = 0; x < 4; ++x) EXPECT_EQ(subset_message(S, x), w.deterministic_message(x));
  EXPECT_THROW(subset_report_strategy(S, 1), InvalidArgument);
}

TEST(Counting, Log2Binomial) {
  EXPECT_NEAR(log2_binomial(4, 2), std::log2(6.0), 1e-12);
  EXPECT_NEAR(log2_binomial(10, 3), std::log2(120.0), 1e-12);
  const std::size_t sizes[] = {2, 2, 2};
  EXPECT_NEAR(log2_multinomial(6, sizes), std::log2(90.0), 1e-12);
}

TEST(LevinThreshold, Examples) {
  const std::vector<double> ones(10, 1.0);
  auto t = levin_threshold(ones, 0.25);
  EXPECT_TRUE(t.applicable);
  EXPECT_EQ(t.j_star, 1u);

  const std::vector<double> low(10, 0.1);
  t = levin_threshold(low, 0.25);
  EXPECT_FALSE(t.applicable);
  EXPECT_FALSE(t.j_star.has_value());

  // all 0.4 at eps 0.3: nothing above 1/2, everything above 1/4
  const std::vector<double> mid(5, 0.4);
  t = levin_threshold(mid, 0.3);
  EXPECT_EQ(t.j_star, 2u);

  std::vector<double> spike(10, 0.0);
  spike[0] = 1.0;
  EXPECT_EQ(levin_threshold(spike, 0.05).j_star, 1u);
  EXPECT_THROW(levin_threshold(std::vector<double>{1.5}, 0.1), InvalidArgument);
}

TEST(LevinThreshold, AlwaysFoundWhenApplicable) {
  Rng g(4);
  for (int i = 0; i < 500; ++i) {
    const double eps = 0.02 + 0.9 * uniform01(g);
    std::vector<double> q(1 + uniform_below(g, 40));
    for (auto& v : q) v = std::pow(uniform01(g), 1.0 + 4.0 * uniform01(g));
    const auto t = levin_threshold(q, eps);
    if (t.applicable) {
      EXPECT_TRUE(t.j_star.has_value());
    }
  }
}

TEST(LevinSchedule, Shape) {
  const auto sch = LevinSchedule::make(16, 2, 0.3);
  EXPECT_EQ(sch.s, 3u);
  EXPECT_EQ(sch.L, 3u);
  ASSERT_EQ(sch.scales.size(), 3u);
  EXPECT_LT(sch.delta_budget(), 1.0 / 40.0);
  EXPECT_DOUBLE_EQ(sch.scales[0].eps_j, 1.0 / 16.0);
  EXPECT_EQ(sch.public_bits(), static_cast<double>(sch.mini_batches()) * std::ceil(std::log2(560.0)));
  for (const auto& sc : sch.scales) EXPECT_GT(sc.n2, 0u);
  EXPECT_EQ(LevinSchedule::make(16, 1, 0.3).scales[0].n2, 0u);
  EXPECT_THROW(levin_protocol(Source::direct(uniform(16)), sch, 1, Engine::players), InvalidArgument);
}

TEST(Smooth, ScheduleAndRequirement) {
  const auto need = SmoothSchedule::required_players(16, 1, 0.3);
  EXPECT_THROW(SmoothSchedule::make(16, 1, 0.3, need - 12), InvalidArgument);
  const auto s = SmoothSchedule::make(16, 1, 0.3, need);
  EXPECT_EQ(s.L, 2u);
  EXPECT_NEAR(s.gamma, std::sqrt(2.0) * 0.3 / 4.0, 1e-15);
  EXPECT_NEAR(s.delta, 1.0 / 72.0, 1e-15);
  EXPECT_EQ(SmoothSchedule::make_unchecked(4, 3, 0.3, 0, 12).L, 4u);
}

TEST(Smooth, PlayersEngineNullAndFar) {
  const std::size_t k = 16;
  const auto s = SmoothSchedule::make(k, 1, 0.3, SmoothSchedule::required_players(k, 1, 0.3));
  const Source null = Source::direct(uniform(k));
  Rng g(5);
  const Source far = Source::direct(paninski({k, 0.3, random_signs(k / 2, g)}));
  EXPECT_GE(accept_rate([&](std::uint64_t seed) { return smooth_protocol(null, s, seed, Engine::players); }, 40),
            2.0 / 3.0);
  EXPECT_LE(accept_rate([&](std::uint64_t seed) { return smooth_protocol(far, s, seed, Engine::players); }, 40),
            1.0 / 3.0);
  const PublicRun r = smooth_protocol(null, s, 9, Engine::players);
  ASSERT_TRUE(r.transcript.has_value());
  EXPECT_EQ(r.players_used, s.m * s.N);
  EXPECT_EQ(r.public_bits, 12.0 * std::ceil(std::log2(12870.0)));
}

TEST(Smooth, AggregateEngineNullAndFar) {
  for (unsigned ell : {1u, 2u, 3u}) {
    const std::size_t k = 64;
    const auto s = SmoothSchedule::make(k, ell, 0.3, SmoothSchedule::required_players(k, ell, 0.3));
    Rng g(6);
    const Source far = Source::direct(paninski({k, 0.3, random_signs(k / 2, g)}));
    EXPECT_GE(accept_rate([&](std::uint64_t seed) { return smooth_protocol(Source::direct(uniform(k)), s, seed, Engine::aggregate); }, 200),
              2.0 / 3.0);
    EXPECT_LE(accept_rate([&](std::uint64_t seed) { return smooth_protocol(far, s, seed, Engine::aggregate); }, 200),
              1.0 / 3.0);
  }
}

TEST(Smooth, Deterministic) {
  const auto s = SmoothSchedule::make(32, 2, 0.3, SmoothSchedule::required_players(32, 2, 0.3));
  const Source src = Source::direct(uniform(32));
  for (Engine e : {Engine::players, Engine::aggregate}) {
    const auto a = smooth_protocol(src, s, 11, e), b = smooth_protocol(src, s, 11, e);
    EXPECT_EQ(a.verdict.decision, b.verdict.decision);
    EXPECT_EQ(a.verdict.diagnostics, b.verdict.diagnostics);
  }
}

TEST(Levin, NullAndFar) {
  for (unsigned ell : {1u, 2u}) {
    const std::size_t k = 32;
    const auto sch = LevinSchedule::make(k, ell, 0.3);
    Rng g(7);
    const Source far = Source::direct(paninski({k, 0.3, random_signs(k / 2, g)}));
    EXPECT_GE(accept_rate([&](std::uint64_t seed) { return levin_protocol(Source::direct(uniform(k)), sch, seed); }, 100),
              2.0 / 3.0);
    EXPECT_LE(accept_rate([&](std::uint64_t seed) { return levin_protocol(far, sch, seed); }, 100), 1.0 / 3.0);
  }
}

TEST(Levin, PlayerEngineAtSmallScale) {
  // A shrunken schedule still runs on individual players; both engines see the same law.
  const auto sch = LevinSchedule::make(8, 1, 0.5, LevinConstants{}, 0.02);
  ASSERT_LE(sch.total_players(), 5'000'000u);
  const Source src = Source::direct(uniform(8));
  const double a = accept_rate([&](std::uint64_t s) { return levin_protocol(src, sch, s, Engine::players); }, 20);
  const double b = accept_rate([&](std::uint64_t s) { return levin_protocol(src, sch, s, Engine::aggregate); }, 20);
  EXPECT_NEAR(a, b, 0.35);
}

TEST(Warmup, NullAndFar) {
  const std::size_t k = 8;
  const double eps = 0.5;
  const auto s = WarmupSchedule::make(k, eps, WarmupSchedule::required_players(k, eps));
  EXPECT_EQ(s.m, 10u);
  EXPECT_NEAR(s.delta, 0.01, 1e-15);
  Rng g(8);
  const Source far = Source::direct(paninski({k, eps, random_signs(k / 2, g)}));
  for (Engine e : {Engine::aggregate, Engine::players}) {
    EXPECT_GE(accept_rate([&](std::uint64_t seed) { return warmup_protocol(Source::direct(uniform(k)), s, seed, e); }, 60),
              2.0 / 3.0);
    EXPECT_LE(accept_rate([&](std::uint64_t seed) { return warmup_protocol(far, s, seed, e); }, 60), 1.0 / 3.0);
  }
  EXPECT_THROW(WarmupSchedule::make(k, eps, 3), InvalidArgument);
}

TEST(PrivateSi, UniformityBaseline) {
  const std::size_t k = 16;
  const SiParams prm{k, 2, 0.3, SiTask::uniformity};
  Rng g(9);
  const Source far = Source::direct(paninski({k, 0.3, random_signs(k / 2, g)}));
  EXPECT_GE(accept_rate([&](std::uint64_t seed) {
              return private_si_uniformity(Source::direct(uniform(k)), 2, 0.3, prm.default_blocks(), seed);
            }, 100),
            2.0 / 3.0);
  EXPECT_LE(accept_rate([&](std::uint64_t seed) { return private_si_uniformity(far, 2, 0.3, prm.default_blocks(), seed); },
                        100),
            1.0 / 3.0);
  EXPECT_EQ(private_si_uniformity(far, 2, 0.3, 10, 1).public_bits, 0.0);
}
