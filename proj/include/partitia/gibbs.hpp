#pragma once

// The probability measure nu_m on partitions of m with weight
// prod_j (theta_j/j)^{r_j} / r_j! normalized by h_m, together with the
// typical-component-size law P(X = l) = theta_l h_{m-l} / (m h_m) and the
// size-biased removal sampler built on it.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "partitia/htable.hpp"
#include "partitia/partition.hpp"
#include "partitia/rng.hpp"

namespace partitia {

class GibbsMeasure {
 public:
  explicit GibbsMeasure(const HTable& table) : table_(table) {}

  const HTable& table() const { return table_; }

  // log of the unnormalized weight prod_j (theta_j/j)^{r_j} / r_j!.
  double log_weight(const Partition& p) const {
    double acc = 0.0;
    for (auto& [j, r] : p.counts()) {
      acc += static_cast<double>(r) *
                 (table_.log_theta(j) - std::log(static_cast<double>(j))) -
             std::lgamma(static_cast<double>(r) + 1.0);
    }
    return acc;
  }

  double log_prob(const Partition& p) const {
    return log_weight(p) - table_.log_h(p.total());
  }

  double prob(const Partition& p) const { return std::exp(log_prob(p)); }

  // P(X = l) for l = 1..m, the law of the size of the component containing a
  // uniformly chosen element.  Returned dense, 1-indexed via out[l-1].
  std::vector<double> typical_size_pmf(std::uint64_t m) const {
    if (m == 0) throw std::invalid_argument("typical_size_pmf: need m >= 1");
    if (m > table_.size()) throw std::out_of_range("typical_size_pmf: m beyond table");
    std::vector<double> out(m);
    const double log_m = std::log(static_cast<double>(m));
    for (std::uint64_t l = 1; l <= m; ++l) {
      out[l - 1] = std::exp(table_.log_theta(l) + table_.log_h(m - l) -
                            table_.log_h(m) - log_m);
    }
    return out;
  }

  // Draw a partition of m by repeatedly removing the component of a random
  // element.  Each removal samples the typical-size law of the remaining
  // mass by inversion; the cumulative scan stops at the sampled size, so a
  // full draw costs O(m) pmf terms in total.
  Partition sample(std::uint64_t m, Rng& rng) const {
    if (m > table_.size()) throw std::out_of_range("sample: m beyond table");
    Partition p;
    std::uint64_t rem = m;
    while (rem > 0) {
      const double log_norm =
          table_.log_h(rem) + std::log(static_cast<double>(rem));
      double u = rng.uniform();
      double acc = 0.0;
      std::uint64_t pick = rem;
      for (std::uint64_t l = 1; l <= rem; ++l) {
        acc += std::exp(table_.log_theta(l) + table_.log_h(rem - l) - log_norm);
        if (u < acc) {
          pick = l;
          break;
        }
      }
      // acc can fall a hair short of 1 from rounding; the largest feasible
      // size absorbs that sliver.
      p.add_part(pick);
      rem -= pick;
    }
    return p;
  }

  // d_N = N h_N / (theta_N exp(sum_j theta_j / j)) for N = 1..limit.
  // Approaches 1 for weight sequences in the subexponential regime; requires
  // a finite exponent sum.
  std::vector<double> subexponential_diagnostic(const WeightSequence& w,
                                                std::uint64_t limit) const {
    if (!w.levy_mass_finite())
      throw std::invalid_argument(
          "subexponential_diagnostic: sum theta_j / j diverges");
    if (limit > table_.size())
      throw std::out_of_range("subexponential_diagnostic: limit beyond table");
    const double mass = w.levy_mass();
    std::vector<double> out(limit);
    for (std::uint64_t n = 1; n <= limit; ++n) {
      out[n - 1] = std::exp(std::log(static_cast<double>(n)) + table_.log_h(n) -
                            table_.log_theta(n) - mass);
    }
    return out;
  }

 private:
  const HTable& table_;
};

}  // namespace partitia
