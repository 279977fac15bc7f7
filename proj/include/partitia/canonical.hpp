#pragma once

// Fixed-total-mass ensemble on the lattice.  The partition function obeys
// the same convolution recurrence as the size-weight table after folding
// each lattice sum c_j(L) into the weight, theta_j -> theta_j c_j(L); the
// probability of a state factorizes into a size multiset drawn under those
// effective weights and independent placements p_{x,j} = e^{-jV(x/L)}/c_j.
// That factorization is also the exact sampler.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include "partitia/gibbs.hpp"
#include "partitia/htable.hpp"
#include "partitia/lattice.hpp"
#include "partitia/rng.hpp"
#include "partitia/spatial.hpp"
#include "partitia/weights.hpp"

namespace partitia {

// log of the unnormalized state weight
//   sum_{x,j} [ r_{x,j} (log theta_j - log j - j V(x/L)) - log r_{x,j}! ]
inline double log_state_weight(const WeightSequence& w, const LatticeWeights& lat,
                               const SpatialPartitionState& s) {
  double lw = 0.0;
  for (const auto& [x, p] : s.sites()) {
    for (const auto& [j, r] : p.counts()) {
      double site = lat.site_weight(static_cast<double>(j), x);
      if (site <= 0.0) return -std::numeric_limits<double>::infinity();
      double rr = static_cast<double>(r);
      lw += rr * (w.log_theta(j) - std::log(static_cast<double>(j)) +
                  std::log(site)) -
            std::lgamma(rr + 1.0);
    }
  }
  return lw;
}

// log of the unnormalized site-mass weight  prod_x h_{eta_x} e^{-eta_x V(x/L)}
inline double log_masses_weight(const HTable& h, const LatticeWeights& lat,
                                const SpatialPartitionState& s) {
  double lw = 0.0;
  for (const auto& [x, p] : s.sites()) {
    std::uint64_t m = p.total();
    double site = lat.site_weight(static_cast<double>(m), x);
    if (site <= 0.0) return -std::numeric_limits<double>::infinity();
    lw += h.log_h(m) + std::log(site);
  }
  return lw;
}

class CanonicalEnsemble {
 public:
  CanonicalEnsemble(WeightSequence w, std::shared_ptr<const LatticeWeights> lat,
                    std::uint64_t n_max)
      : w_(std::move(w)), lat_(std::move(lat)), n_max_(n_max) {
    if (n_max_ == 0) throw std::invalid_argument("canonical: n_max must be >= 1");
    std::vector<double> theta = w_.prefix(n_max_);
    std::vector<double> theta_eff(theta);
    for (std::uint64_t j = 1; j <= n_max_; ++j)
      theta_eff[j - 1] *= lat_->c(j);
    h_plain_ = std::make_unique<HTable>(std::move(theta));
    h_eff_ = std::make_unique<HTable>(std::move(theta_eff));
  }

  const WeightSequence& weights() const { return w_; }
  const LatticeWeights& lattice() const { return *lat_; }
  std::shared_ptr<const LatticeWeights> lattice_ptr() const { return lat_; }
  std::uint64_t n_max() const { return n_max_; }
  const HTable& h_plain() const { return *h_plain_; }
  const HTable& h_effective() const { return *h_eff_; }

  double log_partition_function(std::uint64_t n) const {
    return h_eff_->log_h(n);
  }

  double log_weight(const SpatialPartitionState& s) const {
    return log_state_weight(w_, *lat_, s);
  }

  double log_prob(const SpatialPartitionState& s) const {
    return log_weight(s) - log_partition_function(s.total());
  }

  double prob(const SpatialPartitionState& s) const {
    return std::exp(log_prob(s));
  }

  // marginal of the site masses: product over sites of h_{eta_x} e^{-eta_x V}
  double log_prob_masses(const std::map<Site, std::uint64_t>& eta) const {
    std::uint64_t n = 0;
    double lw = 0.0;
    for (const auto& [x, m] : eta) {
      if (m == 0) continue;
      n += m;
      double site = lat_->site_weight(static_cast<double>(m), x);
      if (site <= 0.0) return -std::numeric_limits<double>::infinity();
      lw += h_plain_->log_h(m) + std::log(site);
    }
    return lw - log_partition_function(n);
  }

  // marginal of the aggregate size counts r_j under effective weights
  double log_prob_sizes(const Partition& sizes) const {
    double lw = 0.0;
    for (const auto& [j, r] : sizes.counts()) {
      double rr = static_cast<double>(r);
      lw += rr * (h_eff_->log_theta(j) - std::log(static_cast<double>(j))) -
            std::lgamma(rr + 1.0);
    }
    return lw - log_partition_function(sizes.total());
  }

  // exact draw: size multiset under effective weights, then independent
  // placement of each component
  SpatialPartitionState sample(std::uint64_t n, Rng& rng) const {
    if (n > n_max_) throw std::out_of_range("canonical sample: n beyond table");
    GibbsMeasure gibbs(*h_eff_);
    Partition sizes = gibbs.sample(n, rng);
    SpatialPartitionState s;
    for (const auto& [j, r] : sizes.counts()) {
      for (std::uint64_t k = 0; k < r; ++k)
        s.add_part(lat_->sample_site(j, rng), j);
    }
    return s;
  }

 private:
  WeightSequence w_;
  std::shared_ptr<const LatticeWeights> lat_;
  std::uint64_t n_max_;
  std::unique_ptr<HTable> h_plain_;
  std::unique_ptr<HTable> h_eff_;
};

}  // namespace partitia
