#pragma once

// Probability mass functions over finite alphabets [k] = {0, ..., k-1}, distances between them,
// the hard-instance generators, and the transformations used by the protocols
// (duplication, flattening onto a partition, conditioning on a subset).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smpsim/errors.hpp"
#include "smpsim/rng.hpp"

namespace smpsim {

using Symbol = std::uint32_t;

inline constexpr double kPmfTolerance = 1e-9;

class Pmf {
 public:
  Pmf() = default;

  /// Validates entries (finite, >= 0) and the total mass. A total within kPmfTolerance of 1 is
  /// renormalized; anything further off is rejected.
  explicit Pmf(std::vector<double> probs) : probs_(std::move(probs)) {
    require(!probs_.empty(), "pmf: alphabet size must be >= 1");
    double sum = 0.0;
    for (double v : probs_) {
      require(std::isfinite(v) && v >= 0.0, "pmf: entries must be finite and nonnegative");
      sum += v;
    }
    require(std::abs(sum - 1.0) <= kPmfTolerance,
            "pmf: entries sum to " + std::to_string(sum) + ", expected 1");
    for (double& v : probs_) v /= sum;
  }

  std::size_t k() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  double l2_norm() const {
    double s = 0.0;
    for (double v : probs_) s += v * v;
    return std::sqrt(s);
  }

  double mass(std::span<const Symbol> set) const {
    double s = 0.0;
    for (Symbol i : set) s += probs_.at(i);
    return s;
  }

  friend bool operator==(const Pmf&, const Pmf&) = default;

 private:
  std::vector<double> probs_;
};

inline void to_json(nlohmann::json& j, const Pmf& p) {
  j = nlohmann::json{{"k", p.k()}, {"probs", std::vector<double>(p.probs().begin(), p.probs().end())}};
}

inline void from_json(const nlohmann::json& j, Pmf& p) {
  const auto k = j.at("k").get<std::size_t>();
  auto probs = j.at("probs").get<std::vector<double>>();
  require(probs.size() == k, "pmf json: 'k' does not match the length of 'probs'");
  p = Pmf(std::move(probs));
}

// ---------------------------------------------------------------------------
// Generators

inline Pmf uniform(std::size_t k) {
  require(k >= 1, "uniform: k must be >= 1");
  return Pmf(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

/// p_theta(2i) = (1 + 2 eps theta_i)/k, p_theta(2i+1) = (1 - 2 eps theta_i)/k (0-indexed pairs).
struct PaninskiParam {
  std::size_t k = 2;
  double eps = 0.0;
  std::vector<int> theta;

  void validate() const {
    require(k >= 2 && k % 2 == 0, "paninski: k must be even");
    require(eps >= 0.0 && eps <= 0.5, "paninski: eps must lie in [0, 1/2]");
    require(theta.size() == k / 2, "paninski: theta must have k/2 entries");
    for (int t : theta) require(t == 1 || t == -1, "paninski: theta entries must be +1 or -1");
  }
};

inline Pmf paninski(const PaninskiParam& param) {
  param.validate();
  const double k = static_cast<double>(param.k);
  std::vector<double> probs(param.k);
  for (std::size_t i = 0; i < param.k / 2; ++i) {
    probs[2 * i] = (1.0 + 2.0 * param.eps * param.theta[i]) / k;
    probs[2 * i + 1] = (1.0 - 2.0 * param.eps * param.theta[i]) / k;
  }
  return Pmf(std::move(probs));
}

/// Uniform over one element of each consecutive pair: entries are 0 or 2/k.
inline Pmf flying_pony(std::size_t k, std::span<const int> theta) {
  require(k >= 2 && k % 2 == 0, "flying_pony: k must be even");
  require(theta.size() == k / 2, "flying_pony: theta must have k/2 entries");
  std::vector<double> probs(k);
  for (std::size_t i = 0; i < k / 2; ++i) {
    require(theta[i] == 1 || theta[i] == -1, "flying_pony: theta entries must be +1 or -1");
    probs[2 * i] = (1.0 + theta[i]) / static_cast<double>(k);
    probs[2 * i + 1] = (1.0 - theta[i]) / static_cast<double>(k);
  }
  return Pmf(std::move(probs));
}

/// Uniformly random sign vector.
template <class G>
std::vector<int> random_signs(std::size_t n, G& g) {
  std::vector<int> theta(n);
  for (auto& t : theta) t = (g() >> 63) ? 1 : -1;
  return theta;
}

/// Dirichlet(1, ..., 1) draw: uniform over the simplex.
template <class G>
Pmf random_pmf(std::size_t k, G& g) {
  std::vector<double> w(k);
  double sum = 0.0;
  for (auto& v : w) {
    v = -std::log(1.0 - uniform01(g));
    sum += v;
  }
  for (auto& v : w) v /= sum;
  return Pmf(std::move(w));
}

// ---------------------------------------------------------------------------
// Distances

namespace detail {
inline void require_same_k(const Pmf& p, const Pmf& q, const char* what) {
  require(p.k() == q.k(), std::string(what) + ": alphabet sizes differ");
}
}  // namespace detail

inline double tv(const Pmf& p, const Pmf& q) {
  detail::require_same_k(p, q, "tv");
  double s = 0.0;
  for (std::size_t i = 0; i < p.k(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

inline double lp2_dist(const Pmf& p, const Pmf& q) {
  detail::require_same_k(p, q, "lp2_dist");
  double s = 0.0;
  for (std::size_t i = 0; i < p.k(); ++i) s += (p[i] - q[i]) * (p[i] - q[i]);
  return std::sqrt(s);
}

/// Chi-square with the q_x (1 - q_x) denominator. Terms with p_x = q_x contribute 0.
inline double chi2(const Pmf& p, const Pmf& q) {
  detail::require_same_k(p, q, "chi2");
  double s = 0.0;
  for (std::size_t i = 0; i < p.k(); ++i) {
    const double d = p[i] - q[i];
    if (d == 0.0) continue;
    const double denom = q[i] * (1.0 - q[i]);
    if (denom <= 0.0) throw DomainError("chi2: zero denominator q_x(1-q_x) where p_x != q_x");
    s += d * d / denom;
  }
  return s;
}

/// Likelihood-ratio chi-square: sum (p_x - q_x)^2 / q_x.
inline double chi2_plain(const Pmf& p, const Pmf& q) {
  detail::require_same_k(p, q, "chi2_plain");
  double s = 0.0;
  for (std::size_t i = 0; i < p.k(); ++i) {
    const double d = p[i] - q[i];
    if (d == 0.0) continue;
    if (q[i] <= 0.0) throw DomainError("chi2_plain: q_x = 0 where p_x > 0");
    s += d * d / q[i];
  }
  return s;
}

/// KL divergence in nats.
inline double kl(const Pmf& p, const Pmf& q) {
  detail::require_same_k(p, q, "kl");
  double s = 0.0;
  for (std::size_t i = 0; i < p.k(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) throw DomainError("kl: q_x = 0 where p_x > 0");
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Sampling

/// Draws symbols from a fixed pmf. Linear CDF scan for k <= 64, Walker alias table above.
class Sampler {
 public:
  static constexpr std::size_t kAliasThreshold = 64;

  Sampler() = default;
  explicit Sampler(const Pmf& p) : k_(p.k()) {
    if (k_ <= kAliasThreshold) {
      cdf_.resize(k_);
      double acc = 0.0;
      for (std::size_t i = 0; i < k_; ++i) cdf_[i] = (acc += p[i]);
      last_positive_ = k_ - 1;
      while (last_positive_ > 0 && p[last_positive_] == 0.0) --last_positive_;
    } else {
      build_alias(p);
    }
  }

  std::size_t k() const noexcept { return k_; }

  template <class G>
  Symbol operator()(G& g) const {
    if (!cdf_.empty()) {
      const double u = uniform01(g);
      for (std::size_t i = 0; i < last_positive_; ++i)
        if (u < cdf_[i]) return static_cast<Symbol>(i);
      return static_cast<Symbol>(last_positive_);
    }
    const std::size_t col = uniform_below(g, k_);
    return uniform01(g) < accept_[col] ? static_cast<Symbol>(col) : alias_[col];
  }

 private:
  void build_alias(const Pmf& p) {
    accept_.assign(k_, 0.0);
    alias_.assign(k_, 0);
    std::vector<double> scaled(k_);
    std::vector<Symbol> small, large;
    for (std::size_t i = 0; i < k_; ++i) {
      scaled[i] = p[i] * static_cast<double>(k_);
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<Symbol>(i));
    }
    while (!small.empty() && !large.empty()) {
      const Symbol s = small.back();
      small.pop_back();
      const Symbol l = large.back();
      accept_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] -= 1.0 - scaled[s];
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    // Leftovers are 1 up to rounding. A zero-mass symbol must never be its own acceptor.
    for (Symbol i : large) accept_[i] = 1.0;
    for (Symbol i : small) accept_[i] = p[i] > 0.0 ? 1.0 : 0.0;
    for (std::size_t i = 0; i < k_; ++i)
      if (p[i] == 0.0) {
        accept_[i] = 0.0;
        if (p[alias_[i]] == 0.0) alias_[i] = first_positive(p);
      }
  }

  static Symbol first_positive(const Pmf& p) {
    for (std::size_t i = 0; i < p.k(); ++i)
      if (p[i] > 0.0) return static_cast<Symbol>(i);
    return 0;
  }

  std::size_t k_ = 0;
  std::vector<double> cdf_;
  std::size_t last_positive_ = 0;
  std::vector<double> accept_;
  std::vector<Symbol> alias_;
};

/// One draw from p. Builds a sampler per call; use Sampler for repeated draws.
template <class G>
Symbol sample(const Pmf& p, G& g) {
  return Sampler(p)(g);
}

/// Multinomial(n, p) counts via a chain of binomials.
template <class G>
std::vector<std::uint64_t> multinomial_counts(std::uint64_t n, const Pmf& p, G& g) {
  std::vector<std::uint64_t> c(p.k(), 0);
  std::size_t last = p.k() - 1;
  while (last > 0 && p[last] == 0.0) --last;
  double rest = 1.0;
  for (std::size_t i = 0; i <= last && n > 0; ++i) {
    if (p[i] == 0.0) continue;
    if (i == last || rest <= p[i]) {
      c[i] = n;
      break;
    }
    c[i] = binomial(g, n, p[i] / rest);
    n -= c[i];
    rest -= p[i];
  }
  return c;
}

// ---------------------------------------------------------------------------
// Transformations

/// q_{2i} = q_{2i+1} = p_i / 2 over [2k].
inline Pmf split_duplicate(const Pmf& p) {
  std::vector<double> q(2 * p.k());
  for (std::size_t i = 0; i < p.k(); ++i) q[2 * i] = q[2 * i + 1] = p[i] / 2.0;
  return Pmf(std::move(q));
}

/// Inverse of split_duplicate on the level of laws: sums consecutive pairs.
inline Pmf merge_adjacent_pairs(const Pmf& q) {
  require(q.k() % 2 == 0, "merge_adjacent_pairs: alphabet size must be even");
  std::vector<double> p(q.k() / 2);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = q[2 * i] + q[2 * i + 1];
  return Pmf(std::move(p));
}

/// Assignment of every symbol of [k] to one of L parts.
class Partition {
 public:
  Partition(std::size_t parts, std::vector<std::uint32_t> assign) : parts_(parts), assign_(std::move(assign)) {
    require(parts_ >= 1, "partition: need at least one part");
    require(!assign_.empty(), "partition: alphabet must be nonempty");
    for (auto a : assign_) require(a < parts_, "partition: part index out of range");
  }

  /// Parts given as explicit member lists; must cover [k] exactly once.
  static Partition from_parts(std::size_t k, const std::vector<std::vector<Symbol>>& parts) {
    std::vector<std::uint32_t> assign(k, UINT32_MAX);
    for (std::size_t r = 0; r < parts.size(); ++r)
      for (Symbol x : parts[r]) {
        require(x < k, "partition: member out of range");
        require(assign[x] == UINT32_MAX, "partition: symbol assigned twice");
        assign[x] = static_cast<std::uint32_t>(r);
      }
    for (auto a : assign) require(a != UINT32_MAX, "partition: parts do not cover the alphabet");
    return Partition(parts.size(), std::move(assign));
  }

  std::size_t k() const noexcept { return assign_.size(); }
  std::size_t parts() const noexcept { return parts_; }
  std::uint32_t part_of(Symbol x) const { return assign_[x]; }
  std::span<const std::uint32_t> assign() const noexcept { return assign_; }

  std::vector<std::size_t> part_sizes() const {
    std::vector<std::size_t> sizes(parts_, 0);
    for (auto a : assign_) ++sizes[a];
    return sizes;
  }

  /// Every part has exactly k/L elements.
  bool balanced() const {
    if (k() % parts_ != 0) return false;
    for (auto s : part_sizes())
      if (s != k() / parts_) return false;
    return true;
  }

  std::vector<std::vector<Symbol>> members() const {
    std::vector<std::vector<Symbol>> out(parts_);
    for (std::size_t x = 0; x < k(); ++x) out[assign_[x]].push_back(static_cast<Symbol>(x));
    return out;
  }

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::size_t parts_;
  std::vector<std::uint32_t> assign_;
};

/// Law induced by p on the parts of a partition.
inline Pmf flatten(const Pmf& p, const Partition& part) {
  require(part.k() == p.k(), "flatten: partition and pmf have different alphabet sizes");
  std::vector<double> q(part.parts(), 0.0);
  for (std::size_t x = 0; x < p.k(); ++x) q[part.part_of(static_cast<Symbol>(x))] += p[x];
  return Pmf(std::move(q));
}

/// A sorted subset of [k].
class SubsetSpec {
 public:
  SubsetSpec(std::size_t k, std::vector<Symbol> members) : k_(k), members_(std::move(members)) {
    require(!members_.empty() && members_.size() <= k_, "subset: size must lie in [1, k]");
    for (std::size_t i = 0; i < members_.size(); ++i) {
      require(members_[i] < k_, "subset: member out of range");
      require(i == 0 || members_[i - 1] < members_[i], "subset: members must be strictly increasing");
    }
  }

  std::size_t k() const noexcept { return k_; }
  std::size_t size() const noexcept { return members_.size(); }
  std::span<const Symbol> members() const noexcept { return members_; }

  /// Position of x among the members, or -1.
  std::ptrdiff_t index_of(Symbol x) const {
    auto it = std::lower_bound(members_.begin(), members_.end(), x);
    return (it != members_.end() && *it == x) ? it - members_.begin() : -1;
  }

  friend bool operator==(const SubsetSpec&, const SubsetSpec&) = default;

 private:
  std::size_t k_;
  std::vector<Symbol> members_;
};

/// p restricted to S and renormalized, as a pmf over the s members (in sorted order).
inline Pmf conditional(const Pmf& p, const SubsetSpec& s) {
  require(s.k() == p.k(), "conditional: subset and pmf have different alphabet sizes");
  const double mass = p.mass(s.members());
  if (mass <= 0.0) throw DomainError("conditional: p(S) = 0");
  std::vector<double> out;
  out.reserve(s.size());
  for (Symbol x : s.members()) out.push_back(p[x] / mass);
  return Pmf(std::move(out));
}

}  // namespace smpsim
