#pragma once

// Distributed simulation of one sample x ~ p from l-bit messages (private coins, Las Vegas).
//
// Batch layout: [k] is cut into contiguous blocks of at most s = 2^l - 1 symbols. Every block is
// used twice (two copies) and every copy is served by a primary and a witness player, so a batch
// has 4 * ceil(k/s) players. A player sends 1 + (position of its sample in its block), or 0 when
// the sample is outside the block. The referee erases each nonzero message independently with
// probability 1/2 and declares x iff exactly one primary is still nonzero and that primary's
// witness is zero. Given a declaration the symbol is distributed exactly as p.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "smpsim/errors.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/rng.hpp"
#include "smpsim/smp.hpp"

namespace smpsim {

inline constexpr std::uint64_t kSimulationPlayerCap = 1'000'000;

/// rho = prod_j (1 - m_j): probability that the two-players-per-block base scheme declares.
inline double rho(std::span<const double> block_masses) {
  double r = 1.0;
  double total = 0.0;
  for (double m : block_masses) {
    require(m >= 0.0 && m <= 1.0 + kPmfTolerance, "rho: block masses must lie in [0, 1]");
    total += m;
    r *= (1.0 - std::min(m, 1.0));
  }
  require(total <= 1.0 + kPmfTolerance, "rho: block masses sum above 1");
  return r;
}

/// (1 - ||p||_2) / e^{1 - ||p||_2}, the lower bound on rho for singleton blocks.
inline double rho_lower_bound(double l2) { return (1.0 - l2) / std::exp(1.0 - l2); }

class SimLayout {
 public:
  SimLayout(std::size_t k, unsigned ell) : k_(k), ell_(ell) {
    require(k >= 1, "simulate: k must be >= 1");
    require(ell >= 1 && ell <= 20, "simulate: ell must lie in [1, 20]");
    cap_ = (std::size_t{1} << ell) - 1;
    for (std::size_t start = 0; start < k; start += cap_) {
      std::vector<Symbol> b;
      for (std::size_t x = start; x < std::min(k, start + cap_); ++x) b.push_back(static_cast<Symbol>(x));
      blocks_.push_back(std::move(b));
    }
    block_of_.resize(k);
    pos_.resize(k);
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      for (std::size_t i = 0; i < blocks_[b].size(); ++i) {
        block_of_[blocks_[b][i]] = static_cast<std::uint32_t>(b);
        pos_[blocks_[b][i]] = static_cast<std::uint32_t>(i);
      }
  }

  std::size_t k() const noexcept { return k_; }
  unsigned ell() const noexcept { return ell_; }
  std::size_t block_capacity() const noexcept { return cap_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  const std::vector<std::vector<Symbol>>& blocks() const noexcept { return blocks_; }
  Partition partition() const { return Partition::from_parts(k_, blocks_); }

  /// Copies of each block (the duplicated alphabet of size 2k).
  std::size_t copy_count() const noexcept { return 2 * blocks_.size(); }
  std::size_t batch_players() const noexcept { return 2 * copy_count(); }

  /// Player j of a batch serves copy j/2 of block j/4; even j are primaries, odd j witnesses.
  std::size_t block_of_player(std::size_t j) const noexcept { return j / 4; }
  static bool is_primary(std::size_t j) noexcept { return j % 2 == 0; }

  Message message(std::size_t player, Symbol x) const {
    return block_of_[x] == block_of_player(player) ? pos_[x] + 1 : 0;
  }

  Symbol symbol_at(std::size_t block, Message m) const { return blocks_[block][m - 1]; }

  /// 20 * ceil(k / (2^l - 1)).
  double player_bound() const { return 20.0 * static_cast<double>(blocks_.size()); }

 private:
  std::size_t k_;
  unsigned ell_;
  std::size_t cap_;
  std::vector<std::vector<Symbol>> blocks_;
  std::vector<std::uint32_t> block_of_, pos_;
};

/// Referee decision on the erased messages of one batch. Returns nullopt for an abort.
inline std::optional<Symbol> decide_batch(const SimLayout& layout, std::span<const Message> modified) {
  require(modified.size() == layout.batch_players(), "decide_batch: wrong number of messages");
  std::optional<std::size_t> hit;
  for (std::size_t j = 0; j < modified.size(); j += 2) {
    if (modified[j] == 0) continue;
    if (hit) return std::nullopt;
    hit = j;
  }
  if (!hit || modified[*hit + 1] != 0) return std::nullopt;
  return layout.symbol_at(layout.block_of_player(*hit), modified[*hit]);
}

/// The referee's erasure step.
template <class G>
void erase_half(std::span<Message> msgs, G& referee_rng) {
  for (auto& m : msgs)
    if (m != 0 && (referee_rng() >> 63)) m = 0;
}

/// Probability that one batch declares: prod over copies of (1 - p(B)/2), each copy counted once
/// per block copy (primary and witness together).
inline double batch_success_probability(const Pmf& p, const SimLayout& layout) {
  require(p.k() == layout.k(), "simulate: pmf and layout disagree on k");
  std::vector<double> masses;
  for (const auto& b : layout.blocks()) {
    masses.push_back(p.mass(b) / 2.0);
    masses.push_back(p.mass(b) / 2.0);
  }
  return rho(masses);
}

/// Runs one batch: fresh samples from nature, messages, erasures, decision.
template <class G>
std::optional<Symbol> run_batch(const SimLayout& layout, const Sampler& nature_sampler, G& nature, G& referee_rng,
                                std::vector<Message>& scratch) {
  scratch.resize(layout.batch_players());
  for (std::size_t j = 0; j < scratch.size(); ++j) scratch[j] = layout.message(j, nature_sampler(nature));
  erase_half(std::span<Message>(scratch), referee_rng);
  return decide_batch(layout, scratch);
}

template <class G>
std::optional<Symbol> run_batch(const Pmf& p, const SimLayout& layout, G& rng) {
  require(p.k() == layout.k(), "simulate: pmf and layout disagree on k");
  std::vector<Message> scratch;
  const Sampler sampler(p);
  return run_batch(layout, sampler, rng, rng, scratch);
}

/// Base scheme without duplication or erasure: one primary and one witness per block.
/// Declares x iff exactly one primary reports and its witness does not.
template <class G>
std::optional<Symbol> run_base_batch(const Pmf& p, const Partition& blocks, G& rng) {
  require(p.k() == blocks.k(), "run_base_batch: pmf and partition disagree on k");
  const Sampler sampler(p);
  std::optional<Symbol> hit;
  bool multiple = false;
  for (std::size_t b = 0; b < blocks.parts(); ++b) {
    const Symbol x = sampler(rng);
    const Symbol w = sampler(rng);
    if (blocks.part_of(x) != b) continue;
    if (hit) multiple = true;
    hit = x;
    if (blocks.part_of(w) == b) multiple = true;  // witness also reported
  }
  if (!hit || multiple) return std::nullopt;
  return hit;
}

struct SimOutcome {
  Symbol symbol = 0;
  std::uint64_t players_used = 0;
  std::uint64_t batches_used = 0;
};

/// Repeats batches until one declares. Throws PlayerCapExceeded past the cap.
template <class G>
SimOutcome simulate_sample(const SimLayout& layout, const Sampler& sampler, G& rng,
                           std::uint64_t cap = kSimulationPlayerCap) {
  std::vector<Message> scratch;
  SimOutcome out;
  for (;;) {
    if (out.players_used + layout.batch_players() > cap)
      throw PlayerCapExceeded("simulate: more than " + std::to_string(cap) + " players used for one sample");
    const auto x = run_batch(layout, sampler, rng, rng, scratch);
    out.players_used += layout.batch_players();
    ++out.batches_used;
    if (x) {
      out.symbol = *x;
      return out;
    }
  }
}

template <class G>
SimOutcome simulate_sample(const Pmf& p, unsigned ell, G& rng) {
  const SimLayout layout(p.k(), ell);
  const Sampler sampler(p);
  return simulate_sample(layout, sampler, rng);
}

/// At most max_batches batches; nullopt if none declared.
template <class G>
std::optional<SimOutcome> simulate_within(const SimLayout& layout, const Sampler& sampler, std::size_t max_batches, G& rng) {
  std::vector<Message> scratch;
  SimOutcome out;
  for (std::size_t b = 0; b < max_batches; ++b) {
    const auto x = run_batch(layout, sampler, rng, rng, scratch);
    out.players_used += layout.batch_players();
    ++out.batches_used;
    if (x) {
      out.symbol = *x;
      return out;
    }
  }
  return std::nullopt;
}

/// count independent samples; sample i uses its own stream derived from (seed, i).
inline std::vector<SimOutcome> simulate_batch_of_samples(const Pmf& p, unsigned ell, std::size_t count,
                                                         std::uint64_t seed) {
  const SimLayout layout(p.k(), ell);
  const Sampler sampler(p);
  std::vector<SimOutcome> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng g(derive_seed(seed, 0x53494d0000000000ULL, i));
    out.push_back(simulate_sample(layout, sampler, g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact laws

struct BatchLaw {
  std::vector<double> declare;  // P(batch declares x), per symbol
  double abort = 0.0;

  double success() const {
    double s = 0.0;
    for (double v : declare) s += v;
    return s;
  }

  /// Law of the declared symbol given that the batch declares.
  std::vector<double> conditional() const {
    const double s = success();
    std::vector<double> c(declare);
    for (double& v : c) v /= s;
    return c;
  }
};

namespace detail {

/// Sums prob(vector) * [decide(vector)] over all vectors in prod_j {0..alphabet_j-1}, where the
/// j-th coordinate has law laws[j].
template <class Decide>
BatchLaw enumerate_messages(const std::vector<std::vector<double>>& laws, std::size_t k, Decide&& decide) {
  double states = 1.0;
  for (const auto& l : laws) states *= static_cast<double>(l.size());
  require(states <= static_cast<double>(1u << 24), "exact batch law: message space too large to enumerate");
  BatchLaw out;
  out.declare.assign(k, 0.0);
  std::vector<Message> v(laws.size(), 0);
  for (;;) {
    double pr = 1.0;
    for (std::size_t j = 0; j < v.size() && pr > 0.0; ++j) pr *= laws[j][v[j]];
    if (pr > 0.0) {
      if (auto x = decide(std::span<const Message>(v)))
        out.declare[*x] += pr;
      else
        out.abort += pr;
    }
    std::size_t j = 0;
    while (j < v.size() && ++v[j] == laws[j].size()) v[j++] = 0;
    if (j == v.size()) break;
  }
  return out;
}

}  // namespace detail

/// Exact law of one batch of the simulation scheme, enumerating every erased-message vector.
inline BatchLaw exact_batch_law(const Pmf& p, const SimLayout& layout) {
  require(p.k() == layout.k(), "simulate: pmf and layout disagree on k");
  std::vector<std::vector<double>> laws;
  for (std::size_t j = 0; j < layout.batch_players(); ++j) {
    const auto& block = layout.blocks()[layout.block_of_player(j)];
    std::vector<double> law(block.size() + 1, 0.0);
    law[0] = 1.0 - p.mass(block) / 2.0;
    for (std::size_t i = 0; i < block.size(); ++i) law[i + 1] = p[block[i]] / 2.0;
    laws.push_back(std::move(law));
  }
  return detail::enumerate_messages(laws, p.k(), [&](std::span<const Message> v) { return decide_batch(layout, v); });
}

/// Exact law of the base scheme (no duplication, no erasure) over a partition.
inline BatchLaw exact_base_batch_law(const Pmf& p, const Partition& blocks) {
  require(p.k() == blocks.k(), "exact_base_batch_law: pmf and partition disagree on k");
  const auto members = blocks.members();
  std::vector<std::vector<double>> laws;
  for (const auto& block : members) {
    std::vector<double> law(block.size() + 1, 0.0);
    law[0] = 1.0 - p.mass(block);
    for (std::size_t i = 0; i < block.size(); ++i) law[i + 1] = p[block[i]];
    laws.push_back(law);  // primary
    laws.push_back(law);  // witness
  }
  return detail::enumerate_messages(laws, p.k(), [&](std::span<const Message> v) -> std::optional<Symbol> {
    std::optional<std::size_t> hit;
    for (std::size_t j = 0; j < v.size(); j += 2) {
      if (v[j] == 0) continue;
      if (hit) return std::nullopt;
      hit = j;
    }
    if (!hit || v[*hit + 1] != 0) return std::nullopt;
    return members[*hit / 2][v[*hit] - 1];
  });
}

// ---------------------------------------------------------------------------
// Count-level engine

/// Draws the outcome of simulate_sample from its exact law: the number of batches is geometric
/// with success probability batch_success_probability, the symbol is an independent draw from p.
template <class G>
SimOutcome simulate_sample_aggregate(const SimLayout& layout, double success, const Sampler& sampler, G& rng) {
  SimOutcome out;
  out.batches_used = geometric_failures(rng, success) + 1;
  out.players_used = out.batches_used * layout.batch_players();
  out.symbol = sampler(rng);
  return out;
}

}  // namespace smpsim
