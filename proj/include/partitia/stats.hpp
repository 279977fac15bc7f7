#pragma once

// Goodness-of-fit machinery and ensemble summaries: Kolmogorov-Smirnov
// one- and two-sample tests with the small-sample-corrected asymptotic
// p-value, chi-square with expected-count pooling, and the per-replica
// condensate observables with their cutoff-tail estimators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "partitia/spatial.hpp"
#include "partitia/special.hpp"

namespace partitia {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;  // zero for one-sample tests
};

namespace detail {
inline double ks_p_value(double d, double n_eff) {
  const double root = std::sqrt(n_eff);
  return kolmogorov_q((root + 0.12 + 0.11 / root) * d);
}
}  // namespace detail

// Supremum distance between the empirical cdf and a given cdf, with the
// Stephens-corrected asymptotic tail probability.  Needs >= 50 points.
inline KsResult ks_one_sample(std::vector<double> sample,
                              const std::function<double(double)>& cdf) {
  if (sample.size() < 50)
    throw std::invalid_argument("ks_one_sample: need at least 50 points");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::max(f - static_cast<double>(i) / n,
                             static_cast<double>(i + 1) / n - f));
  }
  KsResult out;
  out.statistic = d;
  out.n1 = sample.size();
  out.p_value = detail::ks_p_value(d, n);
  return out;
}

// Two-sample supremum distance with effective size n m / (n + m); ties are
// resolved by advancing both runs before the gap is read.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 50 || b.size() < 50)
    throw std::invalid_argument("ks_two_sample: need at least 50 points each");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  KsResult out;
  out.statistic = d;
  out.n1 = a.size();
  out.n2 = b.size();
  out.p_value = detail::ks_p_value(d, na * nb / (na + nb));
  return out;
}

struct Chi2Result {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

// Pearson statistic against a fixed pmf over bins; bins are pooled greedily
// from the right until every pooled cell has expected count >= min_expected.
// Pooling depends only on the expected counts, so statistics from repeated
// runs at the same design remain summable.
inline Chi2Result chi2_gof(const std::vector<std::uint64_t>& observed,
                           const std::vector<double>& probs,
                           double min_expected = 10.0) {
  if (observed.size() != probs.size() || observed.empty())
    throw std::invalid_argument("chi2_gof: mismatched bins");
  std::uint64_t total = 0;
  for (std::uint64_t o : observed) total += o;
  const double n = static_cast<double>(total);
  std::vector<double> exp_pool;
  std::vector<double> obs_pool;
  double e_acc = 0.0, o_acc = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    e_acc += n * probs[k];
    o_acc += static_cast<double>(observed[k]);
    if (e_acc >= min_expected) {
      exp_pool.push_back(e_acc);
      obs_pool.push_back(o_acc);
      e_acc = o_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (exp_pool.empty())
      throw std::invalid_argument("chi2_gof: too few expected counts to pool");
    exp_pool.back() += e_acc;
    obs_pool.back() += o_acc;
  }
  if (exp_pool.size() < 2)
    throw std::invalid_argument("chi2_gof: pooling left a single cell");
  Chi2Result out;
  for (std::size_t k = 0; k < exp_pool.size(); ++k) {
    const double diff = obs_pool[k] - exp_pool[k];
    out.statistic += diff * diff / exp_pool[k];
  }
  out.dof = exp_pool.size() - 1;
  out.p_value = chi2_sf(out.statistic, static_cast<double>(out.dof));
  return out;
}

// Per-replica condensate observables.  The peak-site component is read at
// the lexicographically first site attaining the maximal occupation.
struct CondensateStats {
  std::uint64_t n = 0;
  std::uint64_t origin_mass = 0;        // H_0
  std::uint64_t max_site_mass = 0;      // M_L
  std::uint64_t max_component = 0;      // T_L
  std::uint64_t peak_site_component = 0;  // S_L, largest part at the fullest site
};

inline CondensateStats condensate_stats(const SpatialPartitionState& s) {
  CondensateStats out;
  out.n = s.total();
  out.origin_mass = s.origin_mass();
  out.max_site_mass = s.max_site_mass();
  out.max_component = s.max_component();
  for (const auto& [x, p] : s.sites()) {
    if (p.total() == out.max_site_mass) {
      out.peak_site_component = p.largest_part();
      break;
    }
  }
  return out;
}

struct MeanWithError {
  double mean = 0.0;
  double se = 0.0;  // standard error across replicas
};

inline MeanWithError mean_with_error(const std::vector<double>& xs) {
  MeanWithError out;
  const double n = static_cast<double>(xs.size());
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= n;
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / (n - 1.0) / n);
  return out;
}

// Ensemble summary: tail-mass estimators at a grid of cutoffs plus the
// per-size and per-occupation mass fractions with replica standard errors.
//   nu_hat(K) = (1/n) sum_{j > K} j R_j        (component-size tail)
//   mu_hat(K) = (1/n) sum_{x: eta_x > K} eta_x (site-occupation tail)
struct EnsembleReport {
  std::uint64_t n = 0;
  std::size_t replicas = 0;
  std::vector<std::uint64_t> cutoffs;
  std::vector<MeanWithError> nu_tail;          // per cutoff
  std::vector<MeanWithError> mu_tail;          // per cutoff
  std::vector<MeanWithError> size_mass;        // [j-1]: j R_j / n
  std::vector<MeanWithError> occupation_mass;  // [k-1]: k #{eta_x = k} / n
  std::vector<CondensateStats> stats;          // one per replica
};

inline EnsembleReport extract_stats(
    const std::vector<SpatialPartitionState>& ensemble, std::uint64_t j_max,
    std::uint64_t k_max, std::vector<std::uint64_t> cutoffs = {}) {
  if (ensemble.empty())
    throw std::invalid_argument("extract_stats: empty ensemble");
  EnsembleReport rep;
  rep.n = ensemble.front().total();
  rep.replicas = ensemble.size();
  if (cutoffs.empty()) {
    const double n = static_cast<double>(rep.n);
    cutoffs = {static_cast<std::uint64_t>(std::pow(n, 0.25)),
               static_cast<std::uint64_t>(std::sqrt(n)),
               static_cast<std::uint64_t>(std::pow(n, 0.75))};
  }
  rep.cutoffs = cutoffs;
  const double n = static_cast<double>(rep.n);
  std::vector<std::vector<double>> nu(cutoffs.size()), mu(cutoffs.size());
  std::vector<std::vector<double>> jm(j_max), km(k_max);
  for (const auto& s : ensemble) {
    if (s.total() != rep.n)
      throw std::invalid_argument("extract_stats: replicas have unequal mass");
    rep.stats.push_back(condensate_stats(s));
    const auto sizes = s.size_counts();
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      double acc = 0.0;
      for (const auto& [j, r] : sizes)
        if (j > cutoffs[c])
          acc += static_cast<double>(j) * static_cast<double>(r);
      nu[c].push_back(acc / n);
      acc = 0.0;
      for (const auto& [x, p] : s.sites())
        if (p.total() > cutoffs[c]) acc += static_cast<double>(p.total());
      mu[c].push_back(acc / n);
    }
    for (std::uint64_t j = 1; j <= j_max; ++j) {
      auto it = sizes.find(j);
      const double r =
          it == sizes.end() ? 0.0 : static_cast<double>(it->second);
      jm[j - 1].push_back(static_cast<double>(j) * r / n);
    }
    std::vector<std::uint64_t> occ(k_max + 1, 0);
    for (const auto& [x, p] : s.sites()) {
      const std::uint64_t m = p.total();
      if (m >= 1 && m <= k_max) ++occ[m];
    }
    for (std::uint64_t k = 1; k <= k_max; ++k)
      km[k - 1].push_back(static_cast<double>(k) *
                          static_cast<double>(occ[k]) / n);
  }
  for (auto& v : nu) rep.nu_tail.push_back(mean_with_error(v));
  for (auto& v : mu) rep.mu_tail.push_back(mean_with_error(v));
  for (auto& v : jm) rep.size_mass.push_back(mean_with_error(v));
  for (auto& v : km) rep.occupation_mass.push_back(mean_with_error(v));
  return rep;
}

}  // namespace partitia
