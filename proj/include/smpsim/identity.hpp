#pragma once

// Identity testing against a known q by reduction to uniformity over [5k]. Symbol x owns
// floor(5k q_x) buckets; the leftover ("slack") buckets absorb the rounding. A sample x lands in
// one of its own buckets with probability alloc_x / (5k q_x) and in a slack bucket otherwise,
// so under p = q every bucket has probability exactly 1/(5k).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "smpsim/errors.hpp"
#include "smpsim/infer.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/public_uniformity.hpp"
#include "smpsim/rng.hpp"
#include "smpsim/smp.hpp"

namespace smpsim {

class GoldreichMap {
 public:
  explicit GoldreichMap(Pmf q) : q_(std::move(q)) {
    const std::size_t k = q_.k();
    m_ = 5 * k;
    alloc_.resize(k);
    start_.resize(k);
    std::size_t used = 0;
    for (std::size_t i = 0; i < k; ++i) {
      // The small guard keeps 5k q_i from flooring to one less when it is integral up to rounding.
      alloc_[i] = static_cast<std::size_t>(std::floor(static_cast<double>(m_) * q_[i] + 1e-9));
      start_[i] = used;
      used += alloc_[i];
    }
    require(used <= m_, "identity map: bucket allocation exceeds 5k");
    slack_start_ = used;
  }

  const Pmf& q() const noexcept { return q_; }
  std::size_t k() const noexcept { return q_.k(); }
  std::size_t m() const noexcept { return m_; }
  std::size_t alloc(Symbol x) const { return alloc_[x]; }
  std::size_t range_start(Symbol x) const { return start_[x]; }
  std::size_t slack() const noexcept { return m_ - slack_start_; }

  /// Probability of staying in x's own buckets.
  double keep_probability(Symbol x) const {
    if (q_[x] <= 0.0 || alloc_[x] == 0) return 0.0;
    return std::min(1.0, static_cast<double>(alloc_[x]) / (static_cast<double>(m_) * q_[x]));
  }

  template <class G>
  Symbol map_sample(Symbol x, G& g) const {
    require(x < k(), "identity map: symbol out of range");
    const double keep = keep_probability(x);
    if (keep >= 1.0 || (keep > 0.0 && slack() == 0) || (keep > 0.0 && uniform01(g) < keep))
      return static_cast<Symbol>(start_[x] + uniform_below(g, alloc_[x]));
    if (slack() == 0) throw DomainError("identity map: symbol has no buckets and there is no slack");
    return static_cast<Symbol>(slack_start_ + uniform_below(g, slack()));
  }

  /// Exact law of map_sample(x) for x ~ p.
  Pmf image(const Pmf& p) const {
    require(p.k() == k(), "identity map: pmf alphabet does not match q");
    std::vector<double> out(m_, 0.0);
    double to_slack = 0.0;
    for (std::size_t x = 0; x < k(); ++x) {
      double keep = keep_probability(static_cast<Symbol>(x));
      if (keep > 0.0 && slack() == 0) keep = 1.0;
      for (std::size_t b = 0; b < alloc_[x]; ++b) out[start_[x] + b] = p[x] * keep / static_cast<double>(alloc_[x]);
      to_slack += p[x] * (1.0 - keep);
    }
    if (slack() > 0) {
      for (std::size_t b = slack_start_; b < m_; ++b) out[b] = to_slack / static_cast<double>(slack());
    } else if (to_slack > 0.0) {
      throw DomainError("identity map: p puts mass on symbols without buckets and there is no slack");
    }
    return Pmf(std::move(out));
  }

  /// The source a player holding x ~ p feeds into a uniformity protocol over [5k].
  Source source(const Pmf& p) const {
    GoldreichMap self = *this;
    return Source{p, image(p), [self](Symbol x, Rng& g) { return self.map_sample(x, g); }};
  }

 private:
  Pmf q_;
  std::size_t m_ = 0;
  std::vector<std::size_t> alloc_, start_;
  std::size_t slack_start_ = 0;
};

inline GoldreichMap build_map(const Pmf& q) { return GoldreichMap(q); }

/// The uniformity test on [5k] runs at 16 eps / 25.
inline double identity_inner_eps(double eps) { return 16.0 * eps / 25.0; }

enum class UniformityProtocol { smooth, levin, warmup, private_si };

inline UniformityProtocol uniformity_protocol_from_string(const std::string& s) {
  if (s == "smooth") return UniformityProtocol::smooth;
  if (s == "levin") return UniformityProtocol::levin;
  if (s == "warmup") return UniformityProtocol::warmup;
  if (s == "private-si") return UniformityProtocol::private_si;
  throw InvalidArgument("unknown protocol '" + s + "' (expected smooth, levin, warmup or private-si)");
}

inline std::string to_string(UniformityProtocol p) {
  switch (p) {
    case UniformityProtocol::smooth: return "smooth";
    case UniformityProtocol::levin: return "levin";
    case UniformityProtocol::warmup: return "warmup";
    case UniformityProtocol::private_si: return "private-si";
  }
  return "?";
}

/// Knobs of the uniformity protocols. `players` is n for smooth and warmup, the number of
/// blocks for private-si, unused for levin (whose size comes from the schedule and scale).
struct UniformityRequest {
  UniformityProtocol protocol = UniformityProtocol::smooth;
  unsigned ell = 1;
  double eps = 0.3;
  std::uint64_t players = 0;
  Engine engine = Engine::aggregate;
  double c_l2 = kDefaultCl2;
  std::size_t smooth_batches = kDefaultSmoothBatches;
  LevinConstants levin;
  double levin_scale = 1.0;
  double warmup_c = 1.0;
};

/// Default player budget for a protocol at (k, ell, eps).
inline std::uint64_t default_players(const UniformityRequest& r, std::size_t k) {
  switch (r.protocol) {
    case UniformityProtocol::smooth: return SmoothSchedule::required_players(k, r.ell, r.eps, r.c_l2, r.smooth_batches);
    case UniformityProtocol::warmup: return WarmupSchedule::required_players(k, r.eps, r.warmup_c);
    case UniformityProtocol::private_si:
      return SiParams{k, r.ell, r.eps, SiTask::uniformity, kDefaultClearn, r.c_l2}.default_blocks();
    case UniformityProtocol::levin: return LevinSchedule::make(k, r.ell, r.eps, r.levin, r.levin_scale).total_players();
  }
  return 0;
}

inline PublicRun run_uniformity(const Source& src, const UniformityRequest& r, std::uint64_t seed) {
  const std::uint64_t n = r.players ? r.players : default_players(r, src.k());
  switch (r.protocol) {
    case UniformityProtocol::smooth:
      return smooth_protocol(src, SmoothSchedule::make(src.k(), r.ell, r.eps, n, r.c_l2, r.smooth_batches), seed,
                             r.engine, r.c_l2);
    case UniformityProtocol::warmup: return warmup_protocol(src, WarmupSchedule::make(src.k(), r.eps, n), seed, r.engine);
    case UniformityProtocol::levin:
      return levin_protocol(src, LevinSchedule::make(src.k(), r.ell, r.eps, r.levin, r.levin_scale), seed, r.engine);
    case UniformityProtocol::private_si: return private_si_uniformity(src, r.ell, r.eps, n, seed, r.engine, r.c_l2);
  }
  throw InvalidArgument("unknown uniformity protocol");
}

/// Maps every player's sample through F_q and runs the uniformity protocol on [5k] at 16 eps/25.
inline PublicRun identity_test_via_uniformity(const Pmf& p, const GoldreichMap& map, UniformityRequest r,
                                              std::uint64_t seed) {
  require(p.k() == map.k(), "identity test: p and q have different alphabet sizes");
  r.eps = identity_inner_eps(r.eps);
  return run_uniformity(map.source(p), r, seed);
}

/// Product instance q = (w, 1-w) x u_{k/2}, symbol a*(k/2) + b.
inline Pmf two_level_product(std::size_t k, double w) {
  require(k >= 4 && k % 4 == 0, "two_level_product: k must be a multiple of 4");
  std::vector<double> probs(k);
  const double half = static_cast<double>(k / 2);
  for (std::size_t b = 0; b < k / 2; ++b) {
    probs[b] = w / half;
    probs[k / 2 + b] = (1.0 - w) / half;
  }
  return Pmf(std::move(probs));
}

/// p_{2i} = q_{2i}(1 + 2 eps theta_i), p_{2i+1} = q_{2i+1}(1 - 2 eps theta_i). Requires
/// q_{2i} = q_{2i+1}; then TV(p, q) = eps.
inline Pmf relative_paninski(const Pmf& q, double eps, std::span<const int> theta) {
  require(q.k() % 2 == 0 && theta.size() == q.k() / 2, "relative_paninski: need even k and k/2 signs");
  require(eps >= 0.0 && eps <= 0.5, "relative_paninski: eps must lie in [0, 1/2]");
  std::vector<double> probs(q.k());
  for (std::size_t i = 0; i < q.k() / 2; ++i) {
    require(std::abs(q[2 * i] - q[2 * i + 1]) <= 1e-15, "relative_paninski: q must be constant on pairs");
    probs[2 * i] = q[2 * i] * (1.0 + 2.0 * eps * theta[i]);
    probs[2 * i + 1] = q[2 * i + 1] * (1.0 - 2.0 * eps * theta[i]);
  }
  return Pmf(std::move(probs));
}

/// Random q with every 5k q_i integral.
template <class G>
Pmf random_granular_pmf(std::size_t k, G& g) {
  const std::size_t m = 5 * k;
  std::vector<double> probs(k, 0.0);
  const Pmf weights = random_pmf(k, g);
  const auto counts = multinomial_counts(m, weights, g);
  for (std::size_t i = 0; i < k; ++i) probs[i] = static_cast<double>(counts[i]) / static_cast<double>(m);
  return Pmf(std::move(probs));
}

}  // namespace smpsim
