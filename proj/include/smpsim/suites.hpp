#pragma once

// Named oracle sweeps over random instances. Each row is one check with its measured value and
// the bound it is compared against; shared by the CLI `verify` command and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "smpsim/errors.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/public_uniformity.hpp"
#include "smpsim/rng.hpp"
#include "smpsim/simulate.hpp"
#include "smpsim/verify.hpp"

namespace smpsim {

struct CheckRow {
  std::string suite;
  std::string check;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"flattening", "chi2",        "hmatrix", "subgaussian",
                                              "paninski-tv", "levin-lemma", "rho"};
  return names;
}

inline bool all_pass(const std::vector<CheckRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
}

namespace detail {

template <class G>
Deviation random_deviation(std::size_t k, G& g) {
  std::vector<double> d(k);
  double s = 0.0;
  for (auto& v : d) s += (v = uniform01(g) - 0.5);
  for (auto& v : d) v -= s / static_cast<double>(k);
  double t = 0.0;
  for (double v : d) t += v;
  d[0] -= t;
  return Deviation(std::move(d));
}

template <class G>
std::vector<double> random_row(std::size_t m, G& g) {
  std::vector<double> r(m);
  double s = 0.0;
  for (auto& v : r) s += (v = 0.05 + uniform01(g));
  for (auto& v : r) v /= s;
  return r;
}

inline CheckRow row(const std::string& suite, const std::string& check, double value, double bound, bool pass) {
  return {suite, check, value, bound, pass};
}

}  // namespace detail

/// Closed-form variance, zero mean, anticoncentration and the fourth-moment tripwire.
inline std::vector<CheckRow> flattening_suite(std::uint64_t seed) {
  Rng g(derive_seed(seed, 0x464c4154ULL));
  std::vector<CheckRow> out;
  double var_res = 0.0, mean_res = 0.0;
  for (std::size_t k : {4, 6, 8})
    for (std::size_t L = 2; L <= k; ++L) {
      if (k % L) continue;
      for (int rep = 0; rep < 20; ++rep) {
        const Deviation d = detail::random_deviation(k, g);
        const auto m = flattening_moments_exact(d, L);
        const double closed = var_Zr_closed_form(d, L, k);
        for (std::size_t r = 0; r < L; ++r) {
          var_res = std::max(var_res, std::abs(m.var[r] - closed));
          mean_res = std::max(mean_res, std::abs(m.mean[r]));
        }
      }
    }
  out.push_back(detail::row("flattening", "var_closed_form_vs_enumeration", var_res, 1e-12, var_res <= 1e-12));
  out.push_back(detail::row("flattening", "mean_Z_zero", mean_res, 1e-12, mean_res <= 1e-12));

  double worst_anti = 1.0, worst_fourth = 0.0;
  for (std::size_t k : {16, 64})
    for (std::size_t L : {2, 4}) {
      const Pmf p = paninski({k, 0.3, random_signs(k / 2, g)});
      const auto m = flattening_anticoncentration(Deviation::between(p, uniform(k)), L, 10000, g);
      worst_anti = std::min(worst_anti, m.anticoncentration);
      worst_fourth = std::max(worst_fourth, m.fourth_ratio);
    }
  out.push_back(detail::row("flattening", "anticoncentration_min", worst_anti, 0.05, worst_anti >= 0.05));
  out.push_back(detail::row("flattening", "fourth_moment_ratio_max", worst_fourth, 50.0, worst_fourth <= 50.0));

  // k = 4: Monte Carlo against the exact probability.
  const Deviation d4({0.1, -0.1, 0.05, -0.05});
  const auto exact = flattening_moments_exact(d4, 2);
  const auto mc = flattening_anticoncentration(d4, 2, 10000, g);
  const double sigma = std::sqrt(exact.anticoncentration * (1.0 - exact.anticoncentration) / 10000.0);
  const double gap = std::abs(mc.anticoncentration - exact.anticoncentration);
  out.push_back(detail::row("flattening", "k4_monte_carlo_vs_exact", gap, 3.0 * sigma + 1e-12, gap <= 3.0 * sigma + 1e-12));
  return out;
}

/// 200 random enumerable mixtures.
inline std::vector<CheckRow> chi2_suite(std::uint64_t seed) {
  Rng g(derive_seed(seed, 0x43484932ULL));
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + uniform_below(g, 3);
    const std::size_t Z = 1 + uniform_below(g, 4);
    std::vector<std::vector<double>> P;
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < n; ++i) {
      sizes.push_back(2 + uniform_below(g, 3));
      P.push_back(detail::random_row(sizes.back(), g));
    }
    std::vector<std::vector<std::vector<double>>> Q(Z);
    for (auto& Qz : Q)
      for (std::size_t i = 0; i < n; ++i) Qz.push_back(detail::random_row(sizes[i], g));
    const auto w = detail::random_row(Z, g);
    worst = std::max(worst, chi2_mixture_identity_check(P, Q, w).residual());
  }
  return {detail::row("chi2", "mixture_identity_residual_max", worst, 1e-9, worst <= 1e-9)};
}

/// 100 random deterministic maps for each of ell = 1, 2.
inline std::vector<CheckRow> hmatrix_suite(std::uint64_t seed) {
  Rng g(derive_seed(seed, 0x484d4154ULL));
  std::vector<CheckRow> out;
  for (unsigned ell : {1u, 2u}) {
    double worst_ratio = 0.0;
    bool symmetric = true;
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t k = 2 * (1 + uniform_below(g, 8));
      const HMatrix H = h_matrix(random_deterministic_map(k, ell, g));
      symmetric = symmetric && H.symmetric();
      worst_ratio = std::max(worst_ratio, H.frobenius_sq() / std::ldexp(1.0, static_cast<int>(ell)));
    }
    const std::string tag = "ell" + std::to_string(ell);
    out.push_back(detail::row("hmatrix", "frobenius_over_2^ell_max_" + tag, worst_ratio, 1.0, worst_ratio <= 1.0 + 1e-12));
    // A symbol whose pair partner sends a different message contributes to two diagonal blocks,
    // so the sharp bound is 2^(ell+1).
    out.push_back(detail::row("hmatrix", "frobenius_over_2^(ell+1)_max_" + tag, worst_ratio / 2.0, 1.0,
                              worst_ratio / 2.0 <= 1.0 + 1e-12));
    out.push_back(detail::row("hmatrix", "symmetric_" + tag, symmetric ? 0.0 : 1.0, 0.0, symmetric));
  }
  return out;
}

/// H matrices of random maps and random symmetric H with half_k <= 6.
inline std::vector<CheckRow> subgaussian_suite(std::uint64_t seed) {
  Rng g(derive_seed(seed, 0x53554247ULL));
  double worst = -INFINITY;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t h = 1 + uniform_below(g, 6);
    HMatrix H{h, std::vector<double>(h * h, 0.0)};
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j <= i; ++j) H(i, j) = H(j, i) = 2.0 * uniform01(g) - 1.0;
    for (double lambda : {0.1, 1.0, 3.0}) {
      const auto c = subgaussian_claim_check(H, lambda);
      worst = std::max(worst, c.log_mgf - c.bound);
    }
  }
  for (int rep = 0; rep < 50; ++rep) {
    const HMatrix H = h_matrix(random_deterministic_map(2 * (1 + uniform_below(g, 6)), 1 + static_cast<unsigned>(uniform_below(g, 2)), g));
    for (double lambda : {0.1, 1.0, 3.0}) {
      const auto c = subgaussian_claim_check(H, lambda);
      worst = std::max(worst, c.log_mgf - c.bound);
    }
  }
  return {detail::row("subgaussian", "log_mgf_minus_bound_max", worst, 0.0, worst <= 1e-12)};
}

/// 1-bit players on Paninski instances, theta enumerated, n <= 12.
inline std::vector<CheckRow> paninski_tv_suite(std::uint64_t seed) {
  Rng g(derive_seed(seed, 0x50544956ULL));
  double worst = 0.0;
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t k = 2 * (2 + uniform_below(g, 5));
    const std::size_t n = 1 + uniform_below(g, 12);
    const double eps = 0.05 + 0.45 * uniform01(g);
    std::vector<MessageMap> W;
    for (std::size_t i = 0; i < n; ++i)
      W.push_back(rep % 2 ? random_deterministic_map(k, 1, g) : threshold_map(k, static_cast<Symbol>(uniform_below(g, k))));
    const auto c = paninski_message_tv_bound(W, eps, 0, g);
    worst = std::max(worst, c.mean_tv_sq / c.bound);
  }
  return {detail::row("paninski-tv", "mean_tv_sq_over_bound_max", worst, 1.0, worst <= 1.0 + 1e-12)};
}

/// A valid j* for 1000 random profiles with mean above eps, plus the Levin schedule budget and
/// the subset-deficit claim at k = 8, s = 3.
inline std::vector<CheckRow> levin_lemma_suite(std::uint64_t seed) {
  Rng g(derive_seed(seed, 0x4c45564eULL));
  std::vector<CheckRow> out;
  std::size_t found = 0, tried = 0;
  while (tried < 1000) {
    const double eps = 0.01 + 0.4 * uniform01(g);
    const std::size_t len = 1 + uniform_below(g, 200);
    std::vector<double> q(len);
    const double power = 0.2 + 4.0 * uniform01(g);
    for (auto& v : q) v = std::pow(uniform01(g), power);
    const auto t = levin_threshold(q, eps);
    if (!t.applicable) continue;
    ++tried;
    found += t.j_star.has_value();
  }
  out.push_back(detail::row("levin-lemma", "profiles_with_j_star", static_cast<double>(found), 1000.0, found == 1000));

  double worst_budget = 0.0;
  for (std::size_t k : {8, 16, 32, 64, 128, 1024})
    for (unsigned ell : {1u, 2u, 3u})
      for (double eps : {0.05, 0.1, 0.3, 0.5, 0.9}) {
        if ((std::size_t{1} << ell) - 1 > k) continue;
        worst_budget = std::max(worst_budget, LevinSchedule::make(k, ell, eps).delta_budget());
      }
  out.push_back(detail::row("levin-lemma", "sum_m_delta_max", worst_budget, 1.0 / 40.0, worst_budget < 1.0 / 40.0));

  double worst_margin = INFINITY;
  for (int inst = 0; inst < 20;) {
    const Pmf p = random_pmf(8, g);
    const double eps = 0.25;
    if (!(tv(p, uniform(8)) > eps)) continue;
    ++inst;
    const auto c = subset_deficit_exact(p, 3);
    worst_margin = std::min(worst_margin, c.expected_deficit - eps * 3.0 / 8.0);
  }
  out.push_back(detail::row("levin-lemma", "subset_deficit_minus_eps_s_over_k_min", worst_margin, 0.0, worst_margin > 0.0));
  return out;
}

/// Product formula against enumeration for k <= 4, and the lower bound on 1000 random pmfs.
inline std::vector<CheckRow> rho_suite(std::uint64_t seed) {
  Rng g(derive_seed(seed, 0x52484fULL));
  double worst = 0.0;
  for (std::size_t k = 1; k <= 4; ++k)
    for (int rep = 0; rep < 25; ++rep) {
      const Pmf p = rep == 0 ? uniform(k) : random_pmf(k, g);
      std::vector<std::uint32_t> assign(k);
      for (std::size_t i = 0; i < k; ++i) assign[i] = static_cast<std::uint32_t>(i);
      const Partition singletons(k, assign);
      const double brute = exact_base_batch_law(p, singletons).success();
      worst = std::max(worst, std::abs(brute - rho(p.probs())));
      if (k >= 2) {
        for (std::size_t i = 0; i < k; ++i) assign[i] = static_cast<std::uint32_t>(i / 2);
        const Partition pairs((k + 1) / 2, assign);
        std::vector<double> masses;
        for (const auto& b : pairs.members()) masses.push_back(p.mass(b));
        worst = std::max(worst, std::abs(exact_base_batch_law(p, pairs).success() - rho(masses)));
      }
    }
  double bound_gap = INFINITY;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t k = 2 + uniform_below(g, 63);
    const Pmf p = random_pmf(k, g);
    double l2 = 0.0;
    for (double v : p.probs()) l2 += v * v;
    bound_gap = std::min(bound_gap, rho(p.probs()) - rho_lower_bound(std::sqrt(l2)));
  }
  return {detail::row("rho", "product_vs_enumeration_max", worst, 1e-12, worst <= 1e-12),
          detail::row("rho", "rho_minus_lower_bound_min", bound_gap, 0.0, bound_gap >= 0.0)};
}

inline std::vector<CheckRow> run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "flattening") return flattening_suite(seed);
  if (name == "chi2") return chi2_suite(seed);
  if (name == "hmatrix") return hmatrix_suite(seed);
  if (name == "subgaussian") return subgaussian_suite(seed);
  if (name == "paninski-tv") return paninski_tv_suite(seed);
  if (name == "levin-lemma") return levin_lemma_suite(seed);
  if (name == "rho") return rho_suite(seed);
  throw ConfigError("unknown verify suite '" + name + "'");
}

}  // namespace smpsim
