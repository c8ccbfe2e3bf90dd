#pragma once

// Public-coin uniformity testing with l-bit players.
//   smooth: every batch hashes [k] onto L = 2^l parts with a shared random balanced partition,
//           players send their part, the referee runs an l2 test on each batch.
//   warmup: every batch bias-tests one shared random symbol (1-bit players).
//   levin:  L scales j, m_j mini-batches per scale; each mini-batch checks p(S) for a shared random
//           s-subset S (s = 2^l - 1) and then tests uniformity of p conditioned on S.
//
// Two engines: Engine::players simulates every player; Engine::aggregate draws the per-batch
// message counts from their exact multinomial law, which is what makes the Levin schedule
// (billions of players at default constants) runnable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "smpsim/errors.hpp"
#include "smpsim/infer.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/rng.hpp"
#include "smpsim/smp.hpp"
#include "smpsim/testers.hpp"

namespace smpsim {

/// log2 of the number of labeled assignments of [k] with the given part sizes.
inline double log2_multinomial(std::size_t k, std::span<const std::size_t> sizes) {
  double v = std::lgamma(static_cast<double>(k) + 1.0);
  for (auto s : sizes) v -= std::lgamma(static_cast<double>(s) + 1.0);
  return v / std::log(2.0);
}

inline double log2_binomial(std::size_t k, std::size_t s) {
  const std::size_t sizes[2] = {s, k - s};
  return log2_multinomial(k, sizes);
}

/// Fisher-Yates shuffle of [k]; the symbol at position i goes to part i mod L. Uniform over
/// balanced labeled assignments when L | k, part sizes differ by at most one otherwise.
template <class G>
Partition random_balanced_partition(std::size_t k, std::size_t L, G& coins) {
  require(L >= 1 && L <= k, "random_balanced_partition: need 1 <= L <= k");
  std::vector<Symbol> perm(k);
  for (std::size_t i = 0; i < k; ++i) perm[i] = static_cast<Symbol>(i);
  for (std::size_t i = k; i > 1; --i) std::swap(perm[i - 1], perm[uniform_below(coins, i)]);
  std::vector<std::uint32_t> assign(k);
  for (std::size_t i = 0; i < k; ++i) assign[perm[i]] = static_cast<std::uint32_t>(i % L);
  return Partition(L, std::move(assign));
}

/// Uniform s-subset of [k] (Floyd's algorithm), sorted.
template <class G>
SubsetSpec random_subset(std::size_t k, std::size_t s, G& coins) {
  require(s >= 1 && s <= k, "random_subset: need 1 <= s <= k");
  std::set<Symbol> chosen;
  for (std::size_t j = k - s; j < k; ++j) {
    const auto t = static_cast<Symbol>(uniform_below(coins, j + 1));
    if (!chosen.insert(t).second) chosen.insert(static_cast<Symbol>(j));
  }
  return SubsetSpec(k, std::vector<Symbol>(chosen.begin(), chosen.end()));
}

/// Symbol outside S -> 0; the r-th member of S (0-based) -> r + 1.
inline MessageMap subset_report_strategy(const SubsetSpec& S, unsigned ell) {
  require(S.size() + 1 <= (std::size_t{1} << ell), "subset_report_strategy: |S| exceeds 2^ell - 1");
  std::vector<Message> msgs(S.k(), 0);
  for (std::size_t r = 0; r < S.size(); ++r) msgs[S.members()[r]] = static_cast<Message>(r + 1);
  return MessageMap::deterministic(S.k(), ell, msgs);
}

inline Message subset_message(const SubsetSpec& S, Symbol x) {
  const auto r = S.index_of(x);
  return r < 0 ? 0 : static_cast<Message>(r + 1);
}

struct PublicRun {
  Verdict verdict;
  std::uint64_t players_used = 0;
  double public_bits = 0.0;
  std::uint64_t public_words = 0;
  std::optional<Transcript> transcript;
};

namespace detail {

inline PublicRun finish_public(Verdict v, std::uint64_t players, const PublicCoins& coins) {
  PublicRun r{std::move(v), players, coins.described_bits(), coins.words_drawn(), std::nullopt};
  r.verdict.note("players", static_cast<double>(players)).note("public_bits", r.public_bits);
  return r;
}

/// Observed symbol of global player i of a trial seeded with seed.
inline Symbol observe_player(const Source& src, const Sampler& sampler, std::uint64_t seed, std::uint64_t i) {
  Rng priv = derive_private_coins(seed, i);
  return observe(src, sampler, seed, i, priv);
}

inline constexpr std::uint64_t kPlayerEngineLimit = 50'000'000;

}  // namespace detail

// ---------------------------------------------------------------------------
// Smooth protocol

inline constexpr std::size_t kDefaultSmoothBatches = 12;

struct SmoothSchedule {
  std::size_t k = 2;
  unsigned ell = 1;
  double eps = 0.3;
  std::size_t L = 2;
  std::size_t m = kDefaultSmoothBatches;
  double delta = 1.0 / 72.0;
  double gamma = 0.1;
  std::uint64_t N = 0;

  L2TestParams test_params() const { return {L, gamma, delta}; }

  /// Players per batch the l2 test needs.
  static std::uint64_t batch_requirement(std::size_t k, unsigned ell, double eps, double c_l2 = kDefaultCl2,
                                         std::size_t m = kDefaultSmoothBatches) {
    return make_unchecked(k, ell, eps, 0, m).test_params().n_req(c_l2);
  }

  static std::uint64_t required_players(std::size_t k, unsigned ell, double eps, double c_l2 = kDefaultCl2,
                                        std::size_t m = kDefaultSmoothBatches) {
    return m * batch_requirement(k, ell, eps, c_l2, m);
  }

  /// Schedule for n players: N = floor(n / m) per batch, which must meet the l2 test's n_req.
  static SmoothSchedule make(std::size_t k, unsigned ell, double eps, std::uint64_t n, double c_l2 = kDefaultCl2,
                             std::size_t m = kDefaultSmoothBatches) {
    SmoothSchedule s = make_unchecked(k, ell, eps, n, m);
    const auto need = s.test_params().n_req(c_l2);
    if (s.N < need)
      throw InvalidArgument("smooth protocol: " + std::to_string(n) + " players give " + std::to_string(s.N) +
                            " per batch, the l2 test needs " + std::to_string(need) + " (n_req = " +
                            std::to_string(need * m) + ")");
    return s;
  }

  static SmoothSchedule make_unchecked(std::size_t k, unsigned ell, double eps, std::uint64_t n, std::size_t m) {
    require(k >= 2, "smooth protocol: k must be >= 2");
    require(ell >= 1 && ell <= 30, "smooth protocol: ell must lie in [1, 30]");
    require(eps > 0.0 && eps <= 1.0, "smooth protocol: eps must lie in (0, 1]");
    require(m >= 1, "smooth protocol: need at least one batch");
    SmoothSchedule s;
    s.k = k;
    s.ell = ell;
    s.eps = eps;
    s.L = std::min<std::size_t>(std::size_t{1} << std::min(ell, 30u), k);
    s.m = m;
    s.delta = 1.0 / (6.0 * static_cast<double>(m));
    s.gamma = std::min(std::sqrt(static_cast<double>(s.L)) * eps / std::sqrt(static_cast<double>(k)), 0.999);
    s.N = n / m;
    return s;
  }
};

namespace detail {

template <class G>
std::vector<Partition> smooth_partitions(const SmoothSchedule& s, G& coins) {
  std::vector<Partition> parts;
  parts.reserve(s.m);
  for (std::size_t b = 0; b < s.m; ++b) parts.push_back(random_balanced_partition(s.k, s.L, coins));
  return parts;
}

inline void account_partitions(const SmoothSchedule& s, const std::vector<Partition>& parts, PublicCoins& coins) {
  for (const auto& part : parts) coins.account_choice_bits(std::ceil(log2_multinomial(s.k, part.part_sizes())));
}

/// Referee on the per-batch part counts; the null is the flattening of u_k.
inline Verdict smooth_decide(const SmoothSchedule& s, const std::vector<Partition>& parts,
                             const std::vector<Counts>& counts, double c_l2) {
  const Pmf uk = uniform(s.k);
  std::size_t rejections = 0;
  for (std::size_t b = 0; b < s.m; ++b) {
    const Pmf null = flatten(uk, parts[b]);
    const bool exact_uniform = parts[b].balanced();
    const Verdict v = l2_uniformity_test(counts[b], s.test_params(), c_l2, exact_uniform ? nullptr : &null);
    if (v.rejected()) ++rejections;
  }
  Verdict out = rejections == 0 ? Verdict::accept() : Verdict::reject();
  out.note("batches", static_cast<double>(s.m)).note("rejecting_batches", static_cast<double>(rejections));
  return out;
}

}  // namespace detail

/// Smooth protocol on one trial seeded with master_seed.
inline PublicRun smooth_protocol(const Source& src, const SmoothSchedule& s, std::uint64_t master_seed,
                                 Engine engine = Engine::players, double c_l2 = kDefaultCl2) {
  require(src.k() == s.k, "smooth protocol: source alphabet does not match k");
  const std::uint64_t used = s.m * s.N;
  if (engine == Engine::players) {
    require(used <= detail::kPlayerEngineLimit, "smooth protocol: too many players for the player engine");
    ProtocolConfig cfg{s.k, s.ell, used, CoinMode::public_coins, master_seed};
    std::vector<Partition> player_view;
    auto factory = [&](PublicCoins* coins) -> Strategy {
      player_view = detail::smooth_partitions(s, *coins);
      detail::account_partitions(s, player_view, *coins);
      return [&player_view, N = s.N](std::size_t i, Symbol x, Rng&) -> Message {
        return player_view[i / N].part_of(x);
      };
    };
    auto referee = [&](std::span<const Message> msgs, PublicCoins* coins, Rng&) {
      const auto parts = detail::smooth_partitions(s, *coins);
      std::vector<Counts> counts(s.m, Counts(s.L, 0));
      for (std::size_t i = 0; i < msgs.size(); ++i) ++counts[i / s.N][msgs[i]];
      return detail::smooth_decide(s, parts, counts, c_l2);
    };
    SmpResult res = run_smp(cfg, factory, referee, src);
    PublicRun r{std::move(res.verdict), used, res.transcript.public_coins->described_bits,
                res.transcript.public_coins->words.size(), std::move(res.transcript)};
    r.verdict.note("players", static_cast<double>(used)).note("public_bits", r.public_bits);
    return r;
  }
  PublicCoins coins(public_seed(master_seed));
  coins.set_logging(false);
  Rng nature = nature_stream(master_seed, 0);
  const auto parts = detail::smooth_partitions(s, coins);
  detail::account_partitions(s, parts, coins);
  std::vector<Counts> counts;
  for (const auto& part : parts) counts.push_back(multinomial_counts(s.N, flatten(src.law, part), nature));
  return detail::finish_public(detail::smooth_decide(s, parts, counts, c_l2), used, coins);
}

// ---------------------------------------------------------------------------
// Warmup protocol

struct WarmupSchedule {
  std::size_t k = 2;
  double eps = 0.3;
  std::size_t m = 1;
  double delta = 0.1;
  BiasTestParams bias;
  std::uint64_t N = 0;

  /// m = ceil(5/eps) batches, delta = 1/(10 m), bias test at p0 = 1/k, alpha = eps/2,
  /// scaled by c (the calibrated multiplier of n_req).
  static std::uint64_t batch_requirement(std::size_t k, double eps, double c = 1.0) {
    const auto s = make_unchecked(k, eps, 0);
    return static_cast<std::uint64_t>(std::ceil(c * static_cast<double>(s.bias.n_req())));
  }

  static std::uint64_t required_players(std::size_t k, double eps, double c = 1.0) {
    return make_unchecked(k, eps, 0).m * batch_requirement(k, eps, c);
  }

  static WarmupSchedule make(std::size_t k, double eps, std::uint64_t n) {
    WarmupSchedule s = make_unchecked(k, eps, n);
    if (s.N < 1) throw InvalidArgument("warmup protocol: fewer players than batches");
    return s;
  }

  static WarmupSchedule make_unchecked(std::size_t k, double eps, std::uint64_t n) {
    require(k >= 2, "warmup protocol: k must be >= 2");
    require(eps > 0.0 && eps <= 1.0, "warmup protocol: eps must lie in (0, 1]");
    WarmupSchedule s;
    s.k = k;
    s.eps = eps;
    s.m = static_cast<std::size_t>(std::ceil(5.0 / eps));
    s.delta = 1.0 / (10.0 * static_cast<double>(s.m));
    s.bias = {1.0 / static_cast<double>(k), eps / 2.0, s.delta};
    s.N = n / s.m;
    return s;
  }
};

inline PublicRun warmup_protocol(const Source& src, const WarmupSchedule& s, std::uint64_t master_seed,
                                 Engine engine = Engine::aggregate) {
  require(src.k() == s.k, "warmup protocol: source alphabet does not match k");
  PublicCoins coins(public_seed(master_seed));
  coins.set_logging(false);
  Rng nature = nature_stream(master_seed, 0);
  const Sampler sampler(src.raw);
  std::size_t rejections = 0;
  std::uint64_t player = 0;
  for (std::size_t b = 0; b < s.m; ++b) {
    const auto target = static_cast<Symbol>(uniform_below(coins, s.k));
    coins.account_choice_bits(std::ceil(std::log2(static_cast<double>(s.k))));
    std::uint64_t ones = 0;
    if (engine == Engine::players) {
      for (std::uint64_t i = 0; i < s.N; ++i) ones += detail::observe_player(src, sampler, master_seed, player++) == target;
    } else {
      ones = binomial(nature, s.N, src.law[target]);
    }
    if (!bias_decide(ones, s.N, s.bias.p0, s.bias.alpha)) ++rejections;
  }
  Verdict v = rejections == 0 ? Verdict::accept() : Verdict::reject();
  v.note("rejecting_batches", static_cast<double>(rejections));
  return detail::finish_public(std::move(v), s.m * s.N, coins);
}

// ---------------------------------------------------------------------------
// Levin's work-investment schedule

struct LevinConstants {
  double c1 = 8.0;
  double c2 = 4.0;
  double c3 = 10.0;
};

struct LevinScale {
  unsigned j = 1;
  double eps_j = 0.0;
  std::uint64_t m_j = 0;
  double delta_j = 0.0;
  std::uint64_t n1 = 0;      // stage-1 players per mini-batch
  std::uint64_t n_cond = 0;  // conditional samples stage 2 needs
  std::uint64_t n2 = 0;      // stage-2 players per mini-batch
  std::uint64_t n_j() const { return n1 + n2; }
};

struct LevinSchedule {
  std::size_t k = 2;
  unsigned ell = 1;
  double eps = 0.3;
  std::size_t s = 1;
  unsigned L = 1;
  double scale = 1.0;
  LevinConstants constants;
  std::vector<LevinScale> scales;

  static unsigned scale_count(double eps) { return static_cast<unsigned>(std::ceil(std::log2(2.0 / eps))); }

  /// scale multiplies the stage-1 and the conditional sample sizes (the protocol's n knob).
  static LevinSchedule make(std::size_t k, unsigned ell, double eps, LevinConstants c = {}, double scale = 1.0) {
    require(k >= 2, "levin: k must be >= 2");
    require(ell >= 1 && ell <= 30, "levin: ell must lie in [1, 30]");
    require(eps > 0.0 && eps < 1.0, "levin: eps must lie in (0, 1)");
    require(scale > 0.0, "levin: scale must be positive");
    LevinSchedule sch;
    sch.k = k;
    sch.ell = ell;
    sch.eps = eps;
    sch.s = std::min<std::size_t>((std::size_t{1} << std::min(ell, 30u)) - 1, k);
    sch.L = scale_count(eps);
    sch.scale = scale;
    sch.constants = c;
    const double kd = static_cast<double>(k), sd = static_cast<double>(sch.s);
    for (unsigned j = 1; j <= sch.L; ++j) {
      LevinScale sc;
      sc.j = j;
      const double w = static_cast<double>(sch.L + 5 - j);
      sc.eps_j = std::ldexp(1.0, -static_cast<int>(j)) / 8.0;
      sc.m_j = static_cast<std::uint64_t>(std::ceil(5.0 * w * w / (std::ldexp(1.0, static_cast<int>(j)) * eps)));
      sc.delta_j = 1.0 / (10.0 * w * w * static_cast<double>(sc.m_j));
      const double lg = std::log(1.0 / sc.delta_j);
      sc.n1 = static_cast<std::uint64_t>(std::ceil(c.c1 * kd * lg / (sd * sc.eps_j * sc.eps_j) * scale));
      if (sch.s >= 2) {
        sc.n_cond = static_cast<std::uint64_t>(std::ceil(c.c3 * std::sqrt(sd) * lg / (sc.eps_j * sc.eps_j) * scale));
        sc.n2 = static_cast<std::uint64_t>(std::ceil(c.c2 * kd / sd * lg)) * sc.n_cond;
      }
      sch.scales.push_back(sc);
    }
    return sch;
  }

  std::uint64_t total_players() const {
    std::uint64_t n = 0;
    for (const auto& sc : scales) n += sc.m_j * sc.n_j();
    return n;
  }

  std::uint64_t mini_batches() const {
    std::uint64_t n = 0;
    for (const auto& sc : scales) n += sc.m_j;
    return n;
  }

  /// sum_j m_j delta_j, which must stay below 1/40.
  double delta_budget() const {
    double d = 0.0;
    for (const auto& sc : scales) d += static_cast<double>(sc.m_j) * sc.delta_j;
    return d;
  }

  /// ceil(log2 C(k, s)) bits per mini-batch.
  double public_bits() const { return static_cast<double>(mini_batches()) * std::ceil(log2_binomial(k, s)); }
};

/// Outcome of one mini-batch of scale sc.
enum class MiniBatchOutcome { pass, stage1_fail, shortfall, stage2_fail };

namespace detail {

/// Stage 1: |ones/n1 - s/k| < eps_j s/k. Stage 2: l2 uniformity of the first n_cond conditional
/// samples at gamma = 2 * 2^-j / 3, the l2 image of the TV separation 2^-j / 3.
inline MiniBatchOutcome levin_decide(const LevinSchedule& sch, const LevinScale& sc, std::uint64_t stage1_ones,
                                     std::uint64_t stage2_hits, const Counts& cond_counts) {
  const double p0 = static_cast<double>(sch.s) / static_cast<double>(sch.k);
  const double mean = static_cast<double>(stage1_ones) / static_cast<double>(sc.n1);
  if (!(std::abs(mean - p0) < sc.eps_j * p0)) return MiniBatchOutcome::stage1_fail;
  if (sch.s < 2) return MiniBatchOutcome::pass;
  if (stage2_hits < sc.n_cond) return MiniBatchOutcome::shortfall;
  const double gamma = 2.0 * std::ldexp(1.0, -static_cast<int>(sc.j)) / 3.0;
  const double n = static_cast<double>(sc.n_cond);
  const double stat = collision_count(cond_counts) / (n * (n - 1) / 2.0) - 1.0 / static_cast<double>(sch.s);
  return stat <= gamma * gamma / (2.0 * static_cast<double>(sch.s)) ? MiniBatchOutcome::pass
                                                                    : MiniBatchOutcome::stage2_fail;
}

}  // namespace detail

inline PublicRun levin_protocol(const Source& src, const LevinSchedule& sch, std::uint64_t master_seed,
                                Engine engine = Engine::aggregate) {
  require(src.k() == sch.k, "levin: source alphabet does not match k");
  if (engine == Engine::players)
    require(sch.total_players() <= detail::kPlayerEngineLimit,
            "levin: schedule needs " + std::to_string(sch.total_players()) +
                " players, too many for the player engine (use the aggregate engine or a smaller scale)");
  PublicCoins coins(public_seed(master_seed));
  coins.set_logging(false);
  Rng nature = nature_stream(master_seed, 0);
  const Sampler sampler(src.raw);
  const double subset_bits = std::ceil(log2_binomial(sch.k, sch.s));
  std::uint64_t fails[4] = {0, 0, 0, 0};
  std::uint64_t player = 0;
  for (const auto& sc : sch.scales) {
    for (std::uint64_t mb = 0; mb < sc.m_j; ++mb) {
      const SubsetSpec S = random_subset(sch.k, sch.s, coins);
      coins.account_choice_bits(subset_bits);
      std::uint64_t ones = 0, hits = 0;
      Counts cond(sch.s, 0);
      if (engine == Engine::players) {
        for (std::uint64_t i = 0; i < sc.n1; ++i)
          ones += subset_message(S, detail::observe_player(src, sampler, master_seed, player++)) != 0;
        for (std::uint64_t i = 0; i < sc.n2; ++i) {
          const Message m = subset_message(S, detail::observe_player(src, sampler, master_seed, player++));
          if (m == 0) continue;
          if (hits++ < sc.n_cond) ++cond[m - 1];
        }
      } else {
        const double pS = src.law.mass(S.members());
        ones = binomial(nature, sc.n1, pS);
        if (sch.s >= 2) {
          hits = binomial(nature, sc.n2, pS);
          if (hits >= sc.n_cond) cond = multinomial_counts(sc.n_cond, conditional(src.law, S), nature);
        }
      }
      ++fails[static_cast<int>(detail::levin_decide(sch, sc, ones, hits, cond))];
    }
  }
  const std::uint64_t failed = fails[1] + fails[2] + fails[3];
  Verdict v = failed == 0 ? Verdict::accept() : Verdict::reject();
  v.note("stage1_fail", static_cast<double>(fails[1]))
      .note("shortfall", static_cast<double>(fails[2]))
      .note("stage2_fail", static_cast<double>(fails[3]));
  return detail::finish_public(std::move(v), sch.total_players(), coins);
}

// ---------------------------------------------------------------------------
// Levin's lemma

struct LevinThreshold {
  bool applicable = false;     // mean of q exceeds eps
  std::optional<unsigned> j_star;
};

/// Smallest j in [L], L = ceil(log2(2/eps)), with P[q(X) > 2^-j] > 2^j eps / (L+5-j)^2 for X
/// uniform over the entries of q.
inline LevinThreshold levin_threshold(std::span<const double> q, double eps) {
  require(!q.empty(), "levin_threshold: empty profile");
  require(eps > 0.0 && eps < 1.0, "levin_threshold: eps must lie in (0, 1)");
  double mean = 0.0;
  for (double v : q) {
    require(v >= 0.0 && v <= 1.0, "levin_threshold: values must lie in [0, 1]");
    mean += v;
  }
  mean /= static_cast<double>(q.size());
  LevinThreshold out;
  if (!(mean > eps)) return out;
  out.applicable = true;
  const unsigned L = LevinSchedule::scale_count(eps);
  for (unsigned j = 1; j <= L; ++j) {
    const double t = std::ldexp(1.0, -static_cast<int>(j));
    std::size_t above = 0;
    for (double v : q) above += v > t;
    const double w = static_cast<double>(L + 5 - j);
    if (static_cast<double>(above) / static_cast<double>(q.size()) > std::ldexp(1.0, static_cast<int>(j)) * eps / (w * w)) {
      out.j_star = j;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Private-coin baseline with the same interface. Simulation draws from the observed law, which
// for a channel source is the law after the channel.

inline PublicRun private_si_uniformity(const Source& src, unsigned ell, double eps, std::uint64_t blocks,
                                       std::uint64_t master_seed, Engine engine = Engine::aggregate,
                                       double c_l2 = kDefaultCl2) {
  SiParams params{src.k(), ell, eps, SiTask::uniformity, kDefaultClearn, c_l2};
  Rng rng(derive_seed(master_seed, 0x5349000000000000ULL));
  SiResult r = simulate_and_infer(src.law, params, blocks, rng, engine);
  PublicRun out{std::move(r.verdict), r.players_used, 0.0, 0, std::nullopt};
  return out;
}

}  // namespace smpsim
