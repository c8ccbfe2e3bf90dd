#pragma once

// Centralized testers run by referees: collision-based l2 uniformity test, coin-bias test and the
// empirical learner. All of them take symbol counts; the sample-vector overloads just count.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smpsim/errors.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/smp.hpp"

namespace smpsim {

using Counts = std::vector<std::uint64_t>;

inline constexpr double kDefaultCl2 = 6.0;

inline Counts count_symbols(std::span<const Symbol> samples, std::size_t k) {
  Counts c(k, 0);
  for (Symbol x : samples) {
    require(x < k, "count_symbols: symbol out of range");
    ++c[x];
  }
  return c;
}

inline std::uint64_t total(const Counts& c) {
  std::uint64_t n = 0;
  for (auto v : c) n += v;
  return n;
}

/// Number of colliding pairs, sum_i C(c_i, 2).
inline double collision_count(const Counts& c) {
  double t = 0.0;
  for (auto v : c) t += 0.5 * static_cast<double>(v) * static_cast<double>(v > 0 ? v - 1 : 0);
  return t;
}

// ---------------------------------------------------------------------------
// l2 uniformity

struct L2TestParams {
  std::size_t L = 2;
  double gamma = 0.5;
  double delta = 1.0 / 3.0;

  void validate() const {
    require(L >= 1, "l2 test: L must be >= 1");
    require(gamma > 0.0 && gamma < 1.0, "l2 test: gamma must lie in (0, 1)");
    require(delta > 0.0 && delta < 1.0, "l2 test: delta must lie in (0, 1)");
  }

  /// ceil(C * sqrt(L) / gamma^2 * ln(1/delta)).
  std::uint64_t n_req(double c_l2 = kDefaultCl2) const {
    validate();
    return static_cast<std::uint64_t>(
        std::ceil(c_l2 * std::sqrt(static_cast<double>(L)) / (gamma * gamma) * std::log(1.0 / delta)));
  }
};

/// Unbiased estimate of ||q - q0||_2^2 from counts (needs n >= 2).
inline double l2_distance_estimate(const Counts& c, std::span<const double> q0) {
  const double n = static_cast<double>(total(c));
  require(n >= 2, "l2 estimate: need at least two samples");
  double cross = 0.0, norm0 = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    cross += q0[i] * static_cast<double>(c[i]);
    norm0 += q0[i] * q0[i];
  }
  return collision_count(c) / (n * (n - 1) / 2.0) - 2.0 * cross / n + norm0;
}

/// Tests q = null against ||q - null||_2 >= gamma/sqrt(L). With the uniform null this is
/// "accept iff T / C(n,2) <= (1 + gamma^2/2) / L". The null defaults to u_L.
inline Verdict l2_uniformity_test(const Counts& c, const L2TestParams& params, double c_l2 = kDefaultCl2,
                                  const Pmf* null = nullptr) {
  params.validate();
  require(c.size() == params.L, "l2 test: counts must have L entries");
  if (null) require(null->k() == params.L, "l2 test: null pmf must have L entries");
  const std::uint64_t need = params.n_req(c_l2);
  const std::uint64_t n = total(c);
  if (n < need)
    throw InvalidArgument("l2 test: " + std::to_string(n) + " samples given, n_req = " + std::to_string(need));
  const double L = static_cast<double>(params.L);
  const double threshold = params.gamma * params.gamma / (2.0 * L);
  double stat;
  if (null) {
    stat = l2_distance_estimate(c, null->probs());
  } else {
    const double nn = static_cast<double>(n);
    stat = collision_count(c) / (nn * (nn - 1) / 2.0) - 1.0 / L;
  }
  Verdict v = stat <= threshold ? Verdict::accept() : Verdict::reject();
  v.note("l2_stat", stat).note("l2_threshold", threshold).note("samples", static_cast<double>(n));
  return v;
}

inline Verdict l2_uniformity_test(std::span<const Symbol> samples, const L2TestParams& params,
                                  double c_l2 = kDefaultCl2) {
  return l2_uniformity_test(count_symbols(samples, params.L), params, c_l2);
}

// ---------------------------------------------------------------------------
// Coin bias

struct BiasTestParams {
  double p0 = 0.5;
  double alpha = 0.5;
  double delta = 1.0 / 3.0;

  void validate() const {
    require(p0 > 0.0 && p0 < 1.0, "bias test: p0 must lie in (0, 1)");
    require(alpha > 0.0 && alpha <= 1.0, "bias test: alpha must lie in (0, 1]");
    require(delta > 0.0 && delta < 1.0, "bias test: delta must lie in (0, 1)");
  }

  /// ceil(12 ln(2/delta) / (p0 alpha^2)).
  std::uint64_t n_req() const {
    validate();
    return static_cast<std::uint64_t>(std::ceil(12.0 * std::log(2.0 / delta) / (p0 * alpha * alpha)));
  }
};

/// The decision rule alone: accept iff |ones/n - p0| <= alpha p0 / 2.
inline bool bias_decide(std::uint64_t ones, std::uint64_t n, double p0, double alpha) {
  require(n >= 1, "bias test: need at least one coin toss");
  const double mean = static_cast<double>(ones) / static_cast<double>(n);
  return std::abs(mean - p0) <= alpha * p0 / 2.0;
}

inline Verdict bias_test(std::uint64_t ones, std::uint64_t n, const BiasTestParams& params) {
  const std::uint64_t need = params.n_req();
  if (n < need)
    throw InvalidArgument("bias test: " + std::to_string(n) + " tosses given, n_req = " + std::to_string(need));
  require(ones <= n, "bias test: more ones than tosses");
  Verdict v = bias_decide(ones, n, params.p0, params.alpha) ? Verdict::accept() : Verdict::reject();
  v.note("mean", static_cast<double>(ones) / static_cast<double>(n)).note("tosses", static_cast<double>(n));
  return v;
}

inline Verdict bias_test(std::span<const std::uint8_t> bits, const BiasTestParams& params) {
  std::uint64_t ones = 0;
  for (auto b : bits) ones += b ? 1 : 0;
  return bias_test(ones, bits.size(), params);
}

// ---------------------------------------------------------------------------
// Learning and the plain centralized test

inline Pmf learn_empirical(const Counts& c) {
  const std::uint64_t n = total(c);
  require(n >= 1, "learn_empirical: no samples");
  std::vector<double> probs(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) probs[i] = static_cast<double>(c[i]) / static_cast<double>(n);
  return Pmf(std::move(probs));
}

inline Pmf learn_empirical(std::span<const Symbol> samples, std::size_t k) {
  return learn_empirical(count_symbols(samples, k));
}

/// TV >= eps implies ||p - u_k||_2 >= 2 eps / sqrt(k), so the l2 test runs at gamma = 2 eps.
inline L2TestParams centralized_params(std::size_t k, double eps) {
  require(eps > 0.0 && eps <= 1.0, "centralized test: eps must lie in (0, 1]");
  return {k, std::min(2.0 * eps, 0.999), 1.0 / 3.0};
}

inline std::uint64_t centralized_n_req(std::size_t k, double eps, double c_l2 = kDefaultCl2) {
  return centralized_params(k, eps).n_req(c_l2);
}

inline Verdict centralized_uniformity_test(const Counts& c, double eps, double c_l2 = kDefaultCl2) {
  return l2_uniformity_test(c, centralized_params(c.size(), eps), c_l2);
}

}  // namespace smpsim
