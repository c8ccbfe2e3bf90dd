#pragma once

// Numeric oracles: moments of the flattened deviation under random balanced partitions, the chi^2
// mixture identity, the H matrix of a deterministic 1-bit/l-bit channel, the sub-Gaussian bound on
// its bilinear form, and the TV bound for Paninski instances seen through 1-bit channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smpsim/errors.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/public_uniformity.hpp"
#include "smpsim/rng.hpp"
#include "smpsim/smp.hpp"

namespace smpsim {

// ---------------------------------------------------------------------------
// Flattening moments

struct Deviation {
  std::vector<double> delta;

  explicit Deviation(std::vector<double> d) : delta(std::move(d)) {
    require(!delta.empty(), "deviation: empty vector");
    double s = 0.0;
    for (double v : delta) s += v;
    require(std::abs(s) <= 1e-12, "deviation: entries must sum to 0");
  }

  static Deviation between(const Pmf& p, const Pmf& q) {
    require(p.k() == q.k(), "deviation: alphabet mismatch");
    std::vector<double> d(p.k());
    double s = 0.0;
    for (std::size_t i = 0; i < p.k(); ++i) s += (d[i] = p[i] - q[i]);
    d[0] -= s;  // absorb rounding so the sum is exactly representable as 0
    return Deviation(std::move(d));
  }

  std::size_t k() const noexcept { return delta.size(); }

  double norm2_sq() const {
    double s = 0.0;
    for (double v : delta) s += v * v;
    return s;
  }
};

/// Z_r = sum of delta_i over part r.
inline std::vector<double> flatten_Z(const Deviation& d, const Partition& part) {
  require(part.k() == d.k(), "flatten_Z: partition and deviation disagree on k");
  require(part.balanced(), "flatten_Z: partition must be balanced");
  std::vector<double> z(part.parts(), 0.0);
  for (std::size_t i = 0; i < d.k(); ++i) z[part.part_of(static_cast<Symbol>(i))] += d.delta[i];
  return z;
}

/// Var Z_r = (1/L) ||delta||^2 (1 - 1/L + (L-1)/(L(k-1))).
inline double var_Zr_closed_form(const Deviation& d, std::size_t L, std::size_t k) {
  require(L >= 2 && k % L == 0 && k == d.k(), "var_Zr_closed_form: need L >= 2 and L | k");
  const double Ld = static_cast<double>(L), kd = static_cast<double>(k);
  return d.norm2_sq() / Ld * (1.0 - 1.0 / Ld + (Ld - 1.0) / (Ld * (kd - 1.0)));
}

/// Calls f on every balanced labeled assignment of [k] into L parts.
inline void for_each_balanced_assignment(std::size_t k, std::size_t L, const std::function<void(const Partition&)>& f) {
  require(L >= 1 && k % L == 0, "balanced assignments: need L | k");
  require(k <= 12, "balanced assignments: k too large to enumerate");
  std::vector<std::uint32_t> assign(k);
  std::vector<std::size_t> room(L, k / L);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == k) {
      f(Partition(L, assign));
      return;
    }
    for (std::size_t r = 0; r < L; ++r) {
      if (room[r] == 0) continue;
      --room[r];
      assign[i] = static_cast<std::uint32_t>(r);
      rec(i + 1);
      ++room[r];
    }
  };
  rec(0);
}

struct FlatteningMoments {
  std::size_t assignments = 0;
  std::vector<double> mean;  // E Z_r
  std::vector<double> var;   // E Z_r^2 - (E Z_r)^2
  double anticoncentration = 0.0;  // P[||Z||_2 > ||delta||_2 / 2]
  double fourth_ratio = 0.0;       // E||Z||^4 / ||delta||^4
};

/// Exact moments over all balanced labeled assignments.
inline FlatteningMoments flattening_moments_exact(const Deviation& d, std::size_t L) {
  FlatteningMoments m;
  m.mean.assign(L, 0.0);
  std::vector<double> second(L, 0.0);
  double above = 0.0, fourth = 0.0;
  const double half_norm_sq = d.norm2_sq() / 4.0;
  for_each_balanced_assignment(d.k(), L, [&](const Partition& part) {
    const auto z = flatten_Z(d, part);
    double nz = 0.0;
    for (std::size_t r = 0; r < L; ++r) {
      m.mean[r] += z[r];
      second[r] += z[r] * z[r];
      nz += z[r] * z[r];
    }
    above += nz > half_norm_sq;
    fourth += nz * nz;
    ++m.assignments;
  });
  const double n = static_cast<double>(m.assignments);
  m.var.resize(L);
  for (std::size_t r = 0; r < L; ++r) {
    m.mean[r] /= n;
    m.var[r] = second[r] / n - m.mean[r] * m.mean[r];
  }
  m.anticoncentration = above / n;
  const double nd = d.norm2_sq();
  m.fourth_ratio = nd > 0.0 ? fourth / n / (nd * nd) : 0.0;
  return m;
}

/// Monte Carlo over random balanced partitions (parts differ by at most one when L does not divide k).
template <class G>
FlatteningMoments flattening_anticoncentration(const Deviation& d, std::size_t L, std::size_t trials, G& g) {
  require(trials >= 1000, "flattening_anticoncentration: need at least 1000 trials");
  FlatteningMoments m;
  m.mean.assign(L, 0.0);
  std::vector<double> second(L, 0.0);
  double above = 0.0, fourth = 0.0;
  const double half_norm_sq = d.norm2_sq() / 4.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Partition part = random_balanced_partition(d.k(), L, g);
    std::vector<double> z(L, 0.0);
    for (std::size_t i = 0; i < d.k(); ++i) z[part.part_of(static_cast<Symbol>(i))] += d.delta[i];
    double nz = 0.0;
    for (std::size_t r = 0; r < L; ++r) {
      m.mean[r] += z[r];
      second[r] += z[r] * z[r];
      nz += z[r] * z[r];
    }
    above += nz > half_norm_sq;
    fourth += nz * nz;
  }
  m.assignments = trials;
  const double n = static_cast<double>(trials);
  m.var.resize(L);
  for (std::size_t r = 0; r < L; ++r) {
    m.mean[r] /= n;
    m.var[r] = second[r] / n - m.mean[r] * m.mean[r];
  }
  m.anticoncentration = above / n;
  const double nd = d.norm2_sq();
  m.fourth_ratio = nd > 0.0 ? fourth / n / (nd * nd) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// chi^2 of a mixture of product laws

struct MixtureCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual() const { return std::abs(lhs - rhs); }
};

/// P_rows[i]: message law of player i under the null. Q_rows_by_z[z][i]: under alternative z.
/// lhs = chi^2(E_Z Q_Z^n, P^n) by enumeration of message tuples (plain chi^2, 0/0 = 0).
/// rhs = E_{Z,Z'} prod_i (1 + H_i(Z, Z')) - 1 with H_i(z, z') = E_P[Delta_i^z Delta_i^z'].
inline MixtureCheck chi2_mixture_identity_check(const std::vector<std::vector<double>>& P_rows,
                                                const std::vector<std::vector<std::vector<double>>>& Q_rows_by_z,
                                                std::span<const double> z_weights) {
  const std::size_t n = P_rows.size();
  const std::size_t Z = Q_rows_by_z.size();
  require(n >= 1 && n <= 3, "chi2 mixture check: need 1 to 3 players");
  require(Z >= 1 && Z <= 4 && z_weights.size() == Z, "chi2 mixture check: need 1 to 4 mixture atoms with weights");
  for (const auto& row : P_rows) require(row.size() >= 1 && row.size() <= 4, "chi2 mixture check: message alphabet <= 4");
  for (const auto& Qz : Q_rows_by_z) {
    require(Qz.size() == n, "chi2 mixture check: every atom needs one row per player");
    for (std::size_t i = 0; i < n; ++i) require(Qz[i].size() == P_rows[i].size(), "chi2 mixture check: row size mismatch");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < P_rows[i].size(); ++m)
      if (P_rows[i][m] == 0.0)
        for (std::size_t z = 0; z < Z; ++z)
          if (Q_rows_by_z[z][i][m] > 0.0 && z_weights[z] > 0.0)
            throw DomainError("chi2 mixture check: Q puts mass on a message with zero null probability");

  MixtureCheck out;
  std::vector<std::size_t> m(n, 0);
  for (;;) {
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) p *= P_rows[i][m[i]];
    double q = 0.0;
    for (std::size_t z = 0; z < Z; ++z) {
      double qz = z_weights[z];
      for (std::size_t i = 0; i < n; ++i) qz *= Q_rows_by_z[z][i][m[i]];
      q += qz;
    }
    if (p > 0.0) out.lhs += (q - p) * (q - p) / p;
    std::size_t i = 0;
    while (i < n && ++m[i] == P_rows[i].size()) m[i++] = 0;
    if (i == n) break;
  }

  for (std::size_t z = 0; z < Z; ++z)
    for (std::size_t w = 0; w < Z; ++w) {
      double prod = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double h = 0.0;
        for (std::size_t mm = 0; mm < P_rows[i].size(); ++mm) {
          const double pm = P_rows[i][mm];
          if (pm == 0.0) continue;
          h += (Q_rows_by_z[z][i][mm] - pm) * (Q_rows_by_z[w][i][mm] - pm) / pm;
        }
        prod *= 1.0 + h;
      }
      out.rhs += z_weights[z] * z_weights[w] * prod;
    }
  out.rhs -= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// H matrix

struct HMatrix {
  std::size_t half_k = 0;
  std::vector<double> entries;  // row-major half_k x half_k

  double operator()(std::size_t i, std::size_t j) const { return entries[i * half_k + j]; }
  double& operator()(std::size_t i, std::size_t j) { return entries[i * half_k + j]; }

  double frobenius_sq() const {
    double s = 0.0;
    for (double v : entries) s += v * v;
    return s;
  }

  bool symmetric(double tol = 1e-12) const {
    for (std::size_t i = 0; i < half_k; ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
    return true;
  }
};

/// H(i1, i2) = sum_m (W(m|2i1) - W(m|2i1+1)) (W(m|2i2) - W(m|2i2+1)) / sum_x W(m|x); messages that
/// no symbol maps to contribute 0.
inline HMatrix h_matrix(const MessageMap& W) {
  require(W.is_deterministic(), "h_matrix: W must be deterministic");
  require(W.k() % 2 == 0, "h_matrix: k must be even");
  const std::size_t h = W.k() / 2;
  HMatrix H{h, std::vector<double>(h * h, 0.0)};
  for (std::size_t m = 0; m < W.message_count(); ++m) {
    double denom = 0.0;
    for (std::size_t x = 0; x < W.k(); ++x) denom += W.prob(static_cast<Message>(m), static_cast<Symbol>(x));
    if (denom == 0.0) continue;
    std::vector<double> diff(h);
    for (std::size_t i = 0; i < h; ++i)
      diff[i] = W.prob(static_cast<Message>(m), static_cast<Symbol>(2 * i)) -
                W.prob(static_cast<Message>(m), static_cast<Symbol>(2 * i + 1));
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < h; ++j) H(i, j) += diff[i] * diff[j] / denom;
  }
  return H;
}

template <class G>
MessageMap random_deterministic_map(std::size_t k, unsigned ell, G& g) {
  std::vector<Message> msgs(k);
  for (auto& m : msgs) m = static_cast<Message>(uniform_below(g, std::uint64_t{1} << ell));
  return MessageMap::deterministic(k, ell, msgs);
}

struct SubgaussianCheck {
  double log_mgf = 0.0;
  double bound = 0.0;
  bool holds() const { return log_mgf <= bound + 1e-12; }
};

/// ln E exp(lambda theta^T H theta') over independent uniform sign vectors, by enumeration.
inline SubgaussianCheck subgaussian_claim_check(const HMatrix& H, double lambda) {
  require(H.half_k >= 1 && H.half_k <= 10, "subgaussian check: half_k must lie in [1, 10]");
  const std::size_t h = H.half_k;
  const std::size_t V = std::size_t{1} << h;
  auto sign = [](std::size_t mask, std::size_t i) { return (mask >> i) & 1 ? 1.0 : -1.0; };
  std::vector<std::vector<double>> Ht(V, std::vector<double>(h, 0.0));  // H theta'
  for (std::size_t b = 0; b < V; ++b)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < h; ++j) Ht[b][i] += H(i, j) * sign(b, j);
  std::vector<double> exps;
  exps.reserve(V * V);
  double mx = -INFINITY;
  for (std::size_t a = 0; a < V; ++a)
    for (std::size_t b = 0; b < V; ++b) {
      double f = 0.0;
      for (std::size_t i = 0; i < h; ++i) f += sign(a, i) * Ht[b][i];
      exps.push_back(lambda * f);
      mx = std::max(mx, lambda * f);
    }
  double s = 0.0;
  for (double e : exps) s += std::exp(e - mx);
  return {mx + std::log(s / static_cast<double>(exps.size())), lambda * lambda * H.frobenius_sq()};
}

// ---------------------------------------------------------------------------
// Paninski instances through 1-bit channels

struct TvBoundCheck {
  double mean_tv_sq = 0.0;
  double std_error = 0.0;  // 0 when theta is enumerated
  double bound = 0.0;
  bool exact = true;
  bool holds() const { return mean_tv_sq <= bound + 3.0 * std_error + 1e-12; }
};

namespace detail {

/// TV between the message-vector laws of n independent 1-bit players under u_k and p_theta.
inline double message_tv(const std::vector<MessageMap>& W, const Pmf& uk, const Pmf& pt) {
  const std::size_t n = W.size();
  std::vector<double> bu(n), bt(n);  // P(message = 1)
  for (std::size_t i = 0; i < n; ++i) {
    bu[i] = W[i].output_law(uk)[1];
    bt[i] = W[i].output_law(pt)[1];
  }
  double tv = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double ru = 1.0, rt = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool one = (mask >> i) & 1;
      ru *= one ? bu[i] : 1.0 - bu[i];
      rt *= one ? bt[i] : 1.0 - bt[i];
    }
    tv += std::abs(ru - rt);
  }
  return tv / 2.0;
}

}  // namespace detail

/// E_theta TV(R^u, R^theta)^2 against (4 eps^2 / k) n. theta is enumerated when k/2 <= 12,
/// otherwise sampled `trials` times.
template <class G>
TvBoundCheck paninski_message_tv_bound(const std::vector<MessageMap>& W, double eps, std::size_t trials, G& g) {
  require(!W.empty() && W.size() <= 12, "paninski tv bound: need 1 to 12 players");
  const std::size_t k = W.front().k();
  for (const auto& w : W) require(w.ell() == 1 && w.k() == k, "paninski tv bound: players must be 1-bit maps over [k]");
  require(k % 2 == 0, "paninski tv bound: k must be even");
  const Pmf uk = uniform(k);
  TvBoundCheck out;
  out.bound = 4.0 * eps * eps / static_cast<double>(k) * static_cast<double>(W.size());
  const std::size_t h = k / 2;
  if (h <= 12) {
    double s = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << h); ++mask) {
      std::vector<int> theta(h);
      for (std::size_t i = 0; i < h; ++i) theta[i] = (mask >> i) & 1 ? 1 : -1;
      const double tv = detail::message_tv(W, uk, paninski({k, eps, theta}));
      s += tv * tv;
    }
    out.mean_tv_sq = s / static_cast<double>(std::uint64_t{1} << h);
    return out;
  }
  require(trials >= 2, "paninski tv bound: need at least 2 trials");
  double s = 0.0, s2 = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const double tv = detail::message_tv(W, uk, paninski({k, eps, random_signs(h, g)}));
    s += tv * tv;
    s2 += tv * tv * tv * tv;
  }
  const double n = static_cast<double>(trials);
  out.exact = false;
  out.mean_tv_sq = s / n;
  out.std_error = std::sqrt(std::max(0.0, s2 / n - out.mean_tv_sq * out.mean_tv_sq) / (n - 1.0));
  return out;
}

/// Player i sends 1 iff its sample is >= t_i.
inline MessageMap threshold_map(std::size_t k, Symbol t) {
  std::vector<Message> msgs(k);
  for (std::size_t x = 0; x < k; ++x) msgs[x] = x >= t ? 1 : 0;
  return MessageMap::deterministic(k, 1, msgs);
}

// ---------------------------------------------------------------------------
// Restricted deviation of a random subset

struct SubsetDeficitCheck {
  double expected_deficit = 0.0;  // E_S sum_{i in S} 1{p_i <= 1/k} (1/k - p_i)
  double tv_times_s_over_k = 0.0;
};

/// Enumerates every s-subset of [k].
inline SubsetDeficitCheck subset_deficit_exact(const Pmf& p, std::size_t s) {
  const std::size_t k = p.k();
  require(s >= 1 && s <= k && k <= 20, "subset deficit: need 1 <= s <= k <= 20");
  const double inv = 1.0 / static_cast<double>(k);
  double total = 0.0;
  std::uint64_t subsets = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != s) continue;
    ++subsets;
    for (std::size_t i = 0; i < k; ++i)
      if ((mask >> i) & 1 && p[i] <= inv) total += inv - p[i];
  }
  return {total / static_cast<double>(subsets), tv(p, uniform(k)) * static_cast<double>(s) / static_cast<double>(k)};
}

}  // namespace smpsim
