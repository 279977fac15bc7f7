#pragma once

// Activity ensemble: every occupation number r_{x,j} is an independent
// Poisson with mean (theta_j / j) z^j e^{-j V(x/L)}.  Summing over sites,
// the total count of size-j components is Poisson with mean
// (theta_j / j) z^j c_j(L), and given the counts the placements are the
// same p_{x,j} used by the fixed-mass sampler.  Conditioning on the total
// mass recovers the fixed-mass ensemble, which gives both a rejection
// sampler and a normalization identity used in tests.

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "partitia/htable.hpp"
#include "partitia/lattice.hpp"
#include "partitia/rng.hpp"
#include "partitia/spatial.hpp"
#include "partitia/weights.hpp"

namespace partitia {

class GrandCanonicalEnsemble {
 public:
  GrandCanonicalEnsemble(WeightSequence w,
                         std::shared_ptr<const LatticeWeights> lat, double z,
                         double trunc_eps = 1e-13)
      : w_(std::move(w)), lat_(std::move(lat)), z_(z) {
    if (!(z > 0.0)) throw std::invalid_argument("grand canonical: z must be > 0");
    if (w_.kind() != WeightKind::kCustom && z > 1.0)
      throw std::invalid_argument(
          "grand canonical: z > 1 lies outside the convergence disk");
    if (z == 1.0 && !w_.levy_mass_finite())
      throw std::invalid_argument(
          "grand canonical: component-count series diverges at z = 1");
    build_rates(trunc_eps);
  }

  double activity() const { return z_; }
  std::uint64_t truncation_level() const { return rates_.size(); }
  const LatticeWeights& lattice() const { return *lat_; }
  const WeightSequence& weights() const { return w_; }

  // Poisson mean for the total number of size-j components
  double count_rate(std::uint64_t j) const {
    return j <= rates_.size() ? rates_[j - 1] : 0.0;
  }

  // dropped mass above the truncation level, in expected component count
  double truncation_tail() const { return tail_; }

  double expected_components() const { return rate_sum_; }

  double expected_total() const {
    double s = 0.0;
    for (std::uint64_t j = 1; j <= rates_.size(); ++j)
      s += static_cast<double>(j) * rates_[j - 1];
    return s;
  }

  SpatialPartitionState sample(Rng& rng) const {
    SpatialPartitionState s;
    for (std::uint64_t j = 1; j <= rates_.size(); ++j) {
      if (rates_[j - 1] <= 0.0) continue;
      std::uint64_t k = rng.poisson(rates_[j - 1]);
      for (std::uint64_t i = 0; i < k; ++i)
        s.add_part(lat_->sample_site(j, rng), j);
    }
    return s;
  }

  // reference path for tests: independent Poisson per (site, size) over an
  // explicit site list; must agree in law with sample()
  SpatialPartitionState sample_sitewise(const std::vector<Site>& sites,
                                        Rng& rng) const {
    SpatialPartitionState s;
    for (std::uint64_t j = 1; j <= rates_.size(); ++j) {
      double base = w_.theta(j) / static_cast<double>(j) *
                    std::pow(z_, static_cast<double>(j));
      if (base <= 0.0) continue;
      for (const auto& x : sites) {
        double mean = base * lat_->site_weight(static_cast<double>(j), x);
        if (mean <= 0.0) continue;
        std::uint64_t k = rng.poisson(mean);
        if (k > 0) s.add_part(x, j, k);
      }
    }
    return s;
  }

  // P(H_x = m) for m = 0..m_max: proportional to h_m (z e^{-V(x/L)})^m
  std::vector<double> site_mass_pmf(const Site& x, std::uint64_t m_max) const {
    double zx = z_ * lat_->site_weight(1.0, x);
    std::vector<double> pmf(m_max + 1, 0.0);
    if (zx == 0.0) {
      pmf[0] = 1.0;
      return pmf;
    }
    std::vector<double> theta = w_.prefix(std::max<std::uint64_t>(m_max, 1));
    HTable h(theta);
    double lam = w_.levy_mass(zx);
    for (std::uint64_t m = 0; m <= m_max; ++m)
      pmf[m] = std::exp(h.log_h(m) + static_cast<double>(m) * std::log(zx) - lam);
    return pmf;
  }

  // log P(N = n) = n log z + log Z_{L,n} - sum_j (theta_j / j) z^j c_j
  double log_prob_total(std::uint64_t n, const HTable& h_eff) const {
    double lam = 0.0;
    for (std::uint64_t j = 1; j <= rates_.size(); ++j) lam += rates_[j - 1];
    return static_cast<double>(n) * std::log(z_) + h_eff.log_h(n) - lam;
  }

  struct ConditionedDraw {
    SpatialPartitionState state;
    std::uint64_t attempts = 0;
  };

  // rejection: resample until the total mass hits n
  ConditionedDraw sample_conditioned(std::uint64_t n, Rng& rng,
                                     std::uint64_t max_attempts = 2000000) const {
    for (std::uint64_t a = 1; a <= max_attempts; ++a) {
      SpatialPartitionState s = sample(rng);
      if (s.total() == n) return {std::move(s), a};
    }
    throw std::runtime_error("sample_conditioned: acceptance too low");
  }

  // z with E[N] = target, by bisection on the monotone mean; families other
  // than finite custom tables live on z in (0, 1)
  static double solve_activity_for_mean(const WeightSequence& w,
                                        std::shared_ptr<const LatticeWeights> lat,
                                        double target, double tol = 1e-10) {
    if (!(target > 0.0)) throw std::invalid_argument("target must be > 0");
    auto mean_at = [&](double z) {
      GrandCanonicalEnsemble g(w, lat, z);
      return g.expected_total();
    };
    double lo = 0.0, hi;
    if (w.kind() == WeightKind::kCustom) {
      hi = 1.0;
      while (mean_at(hi) < target) {
        hi *= 2.0;
        if (hi > 1e12) throw std::runtime_error("activity search diverged");
      }
    } else {
      hi = 1.0 - 1e-12;
      double cap = w.levy_mass_finite() ? mean_at(hi)
                                        : std::numeric_limits<double>::infinity();
      if (target >= cap)
        throw std::runtime_error(
            "requested mean exceeds the activity ensemble's range");
    }
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (mean_at(mid) < target)
        lo = mid;
      else
        hi = mid;
      if (hi - lo < tol * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
  }

 private:
  void build_rates(double eps) {
    double c1 = lat_->c(1);
    rate_sum_ = 0.0;
    std::uint64_t j = 0;
    std::uint64_t j_cap = w_.max_j();
    for (;;) {
      ++j;
      if (j > j_cap) {
        tail_ = 0.0;
        break;
      }
      double rate = w_.theta(j) / static_cast<double>(j) *
                    std::pow(z_, static_cast<double>(j)) * lat_->c(j);
      rates_.push_back(rate);
      rate_sum_ += rate;
      if (j >= 16) {
        // sites only lose weight as j grows, so c_j <= c_1 bounds the tail
        double tb = c1 * w_.tail_bound(-1.0, z_, j);
        if (tb <= eps * (1.0 + rate_sum_)) {
          tail_ = tb;
          break;
        }
      }
      if (j > 50000000)
        throw std::runtime_error("grand canonical: truncation did not converge");
    }
  }

  WeightSequence w_;
  std::shared_ptr<const LatticeWeights> lat_;
  double z_;
  std::vector<double> rates_;
  double rate_sum_ = 0.0;
  double tail_ = 0.0;
};

}  // namespace partitia
