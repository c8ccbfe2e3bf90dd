#pragma once

// Private-coin simulate-and-infer: players are cut into blocks, every block tries to simulate one
// sample of p, and the referee runs a centralized learner or tester on the simulated samples.
// Also the one-bit flying-pony protocol, where simulate-and-infer is far from optimal.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "smpsim/errors.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/rng.hpp"
#include "smpsim/simulate.hpp"
#include "smpsim/smp.hpp"
#include "smpsim/testers.hpp"

namespace smpsim {

enum class Engine { players, aggregate };

inline Engine engine_from_string(const std::string& s) {
  if (s == "players") return Engine::players;
  if (s == "aggregate") return Engine::aggregate;
  throw InvalidArgument("unknown engine '" + s + "' (expected players or aggregate)");
}

enum class SiTask { learn, uniformity };

inline constexpr double kDefaultClearn = 2.0;
inline constexpr std::size_t kBatchesPerBlock = 10;

struct SiParams {
  std::size_t k = 2;
  unsigned ell = 1;
  double eps = 0.25;
  SiTask task = SiTask::uniformity;
  double c_learn = kDefaultClearn;
  double c_l2 = kDefaultCl2;

  void validate() const {
    require(k >= 2, "simulate-and-infer: k must be >= 2");
    require(ell >= 1, "simulate-and-infer: ell must be >= 1");
    require(eps > 0.0 && eps <= 1.0, "simulate-and-infer: eps must lie in (0, 1]");
  }

  /// Samples the centralized routine needs.
  std::uint64_t psi() const {
    validate();
    if (task == SiTask::learn)
      return static_cast<std::uint64_t>(std::ceil(c_learn * static_cast<double>(k) / (eps * eps)));
    return centralized_n_req(k, eps, c_l2);
  }

  /// A block is kBatchesPerBlock batches of the simulation scheme. Its expected number of
  /// batches needed is at most 4, so by Markov a block succeeds with probability >= 1/2.
  std::uint64_t block_players() const { return kBatchesPerBlock * SimLayout(k, ell).batch_players(); }

  /// 4 psi + 9 blocks leave >= psi successes with probability >= 14/15.
  std::uint64_t default_blocks() const { return 4 * psi() + 9; }

  std::uint64_t default_players() const { return default_blocks() * block_players(); }
};

struct SiResult {
  Verdict verdict;
  std::optional<Pmf> estimate;
  Counts counts;
  std::uint64_t blocks = 0;
  std::uint64_t successes = 0;
  std::uint64_t players_used = 0;
};

/// Probability that one block of kBatchesPerBlock batches yields a sample.
inline double block_success_probability(const Pmf& p, unsigned ell) {
  const double r = batch_success_probability(p, SimLayout(p.k(), ell));
  return 1.0 - std::pow(1.0 - r, static_cast<double>(kBatchesPerBlock));
}

namespace detail {

inline SiResult finish_si(const SiParams& params, SiResult r) {
  r.verdict.note("blocks", static_cast<double>(r.blocks)).note("simulated", static_cast<double>(r.successes));
  if (r.successes < params.psi()) {
    r.verdict = Verdict::inconclusive()
                    .note("simulated", static_cast<double>(r.successes))
                    .note("psi", static_cast<double>(params.psi()));
    return r;
  }
  if (params.task == SiTask::learn) {
    r.estimate = learn_empirical(r.counts);
    r.verdict.decision = Decision::estimate;
  } else {
    auto diag = std::move(r.verdict.diagnostics);
    r.verdict = centralized_uniformity_test(r.counts, params.eps, params.c_l2);
    r.verdict.diagnostics.insert(r.verdict.diagnostics.begin(), diag.begin(), diag.end());
  }
  return r;
}

}  // namespace detail

/// Runs B blocks. With Engine::players every player is simulated. With Engine::aggregate the
/// number of successful blocks is drawn as Binomial(B, block success) and the symbols as a
/// multinomial from p, which is the same joint law.
template <class G>
SiResult simulate_and_infer(const Pmf& p, const SiParams& params, std::uint64_t blocks, G& rng,
                            Engine engine = Engine::players) {
  params.validate();
  require(p.k() == params.k, "simulate-and-infer: pmf alphabet does not match k");
  require(blocks >= 1, "simulate-and-infer: need at least one block");
  SiResult r;
  r.blocks = blocks;
  r.players_used = blocks * params.block_players();
  if (engine == Engine::players) {
    const SimLayout layout(p.k(), params.ell);
    const Sampler sampler(p);
    r.counts.assign(p.k(), 0);
    for (std::uint64_t b = 0; b < blocks; ++b) {
      if (auto out = simulate_within(layout, sampler, kBatchesPerBlock, rng)) {
        ++r.counts[out->symbol];
        ++r.successes;
      }
    }
  } else {
    r.successes = binomial(rng, blocks, block_success_probability(p, params.ell));
    r.counts = multinomial_counts(r.successes, p, rng);
  }
  r.verdict = Verdict::abort();
  return detail::finish_si(params, std::move(r));
}

// ---------------------------------------------------------------------------
// Flying pony

inline constexpr double kDefaultCflyingPony = 40.0;

inline std::uint64_t flying_pony_players(std::size_t k, double c = kDefaultCflyingPony) {
  return static_cast<std::uint64_t>(std::ceil(c * static_cast<double>(k)));
}

/// Accept iff the number of ones lies in (0.5 n/k, 1.5 n/k], between the three candidate
/// biases 0, 1/k and 2/k.
inline Verdict flying_pony_decide(std::uint64_t ones, std::uint64_t n, std::size_t k) {
  const double lo = 0.5 * static_cast<double>(n) / static_cast<double>(k);
  const double hi = 1.5 * static_cast<double>(n) / static_cast<double>(k);
  const double c = static_cast<double>(ones);
  Verdict v = (c > lo && c <= hi) ? Verdict::accept() : Verdict::reject();
  v.note("ones", c).note("lo", lo).note("hi", hi);
  return v;
}

/// Player i sends 1 iff its sample is symbol 0.
inline Strategy flying_pony_strategy() {
  return [](std::size_t, Symbol x, Rng&) -> Message { return x == 0 ? 1 : 0; };
}

inline Referee flying_pony_referee(std::size_t k) {
  return [k](std::span<const Message> msgs, PublicCoins*, Rng&) {
    std::uint64_t ones = 0;
    for (auto m : msgs) ones += m;
    return flying_pony_decide(ones, msgs.size(), k);
  };
}

/// One execution through the SMP fabric, fully determined by master_seed.
inline SmpResult flying_pony_protocol(const Pmf& p, std::uint64_t n, std::uint64_t master_seed) {
  ProtocolConfig cfg{p.k(), 1, n, CoinMode::private_coins, master_seed};
  return run_smp(cfg, [](PublicCoins*) { return flying_pony_strategy(); }, flying_pony_referee(p.k()),
                 Source::direct(p));
}

/// Same law, drawing the number of ones directly.
template <class G>
Verdict flying_pony_aggregate(const Pmf& p, std::uint64_t n, G& rng) {
  return flying_pony_decide(binomial(rng, n, p[0]), n, p.k());
}

}  // namespace smpsim
