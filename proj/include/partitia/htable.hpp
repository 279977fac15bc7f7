#pragma once

// Normalization tables h_m for single-site component measures.  h is defined
// by the sum over partitions of m of prod_j (theta_j/j)^{r_j} / r_j!; the
// generating-function identity sum_m h_m z^m = exp(sum_j theta_j z^j / j)
// yields the recurrence actually computed here,
//
//     n h_n = sum_{j=1}^{n} theta_j h_{n-j},   h_0 = 1,
//
// which an enumeration oracle in the test suite validates directly.  Tables
// keep a linear-domain column until it would overflow (threshold 1e300) and
// always keep a log-domain column, so downstream code can ask for ratios and
// probabilities at any n.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "partitia/weights.hpp"

namespace partitia {

class HTable {
 public:
  // theta_prefix[j-1] = theta_j for j = 1..N.
  explicit HTable(std::vector<double> theta_prefix)
      : theta_(std::move(theta_prefix)) {
    const std::size_t N = theta_.size();
    log_theta_.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      if (!(theta_[i] >= 0.0))
        throw std::invalid_argument("HTable: weights must be >= 0");
      log_theta_[i] = theta_[i] > 0.0 ? std::log(theta_[i])
                                      : -std::numeric_limits<double>::infinity();
    }
    h_.assign(N + 1, 0.0);
    log_h_.assign(N + 1, -std::numeric_limits<double>::infinity());
    h_[0] = 1.0;
    log_h_[0] = 0.0;
    linear_limit_ = N;
    for (std::size_t n = 1; n <= N; ++n) {
      if (n <= linear_limit_) {
        double acc = 0.0;
        for (std::size_t j = 1; j <= n; ++j) acc += theta_[j - 1] * h_[n - j];
        double hn = acc / static_cast<double>(n);
        if (hn > 1e300) {
          linear_limit_ = n - 1;  // linear column stops just before overflow
        } else {
          h_[n] = hn;
        }
      }
      log_h_[n] = log_recurrence(n);
    }
  }

  static HTable from_weights(const WeightSequence& w, std::uint64_t N) {
    return HTable(w.prefix(N));
  }

  std::size_t size() const { return theta_.size(); }
  std::size_t linear_limit() const { return linear_limit_; }

  double theta(std::uint64_t j) const { return theta_.at(j - 1); }
  double log_theta(std::uint64_t j) const { return log_theta_.at(j - 1); }

  double h(std::uint64_t n) const {
    if (n > linear_limit_)
      throw std::out_of_range("HTable::h: value exceeds linear range, use log_h");
    return h_.at(n);
  }

  double log_h(std::uint64_t n) const { return log_h_.at(n); }

  bool h_positive(std::uint64_t n) const {
    return std::isfinite(log_h_.at(n));
  }

  // Exit-rate ratio h_{n-1}/h_n; the zero-range rate attached to a site
  // holding n particles.
  double g(std::uint64_t n) const {
    if (n == 0) return 0.0;
    if (n <= linear_limit_ && h_[n] > 0.0) return h_[n - 1] / h_[n];
    return std::exp(log_h_[n - 1] - log_h_[n]);
  }

 private:
  double log_recurrence(std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j <= n; ++j) {
      double t = log_theta_[j - 1] + log_h_[n - j];
      if (t > mx) mx = t;
    }
    if (!std::isfinite(mx)) return -std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      double t = log_theta_[j - 1] + log_h_[n - j];
      if (std::isfinite(t)) acc += std::exp(t - mx);
    }
    return mx + std::log(acc) - std::log(static_cast<double>(n));
  }

  std::vector<double> theta_;
  std::vector<double> log_theta_;
  std::vector<double> h_;      // valid through linear_limit_
  std::vector<double> log_h_;  // always valid
  std::size_t linear_limit_ = 0;
};

// Inverse direction: recover theta_1..theta_N from h_0..h_N via
// theta_n = n h_n - sum_{j=1}^{n-1} theta_j h_{n-j}.  Requires h[0] = 1.
inline std::vector<double> theta_from_h(const std::vector<double>& h) {
  if (h.empty() || h[0] != 1.0)
    throw std::invalid_argument("theta_from_h: h[0] must equal 1");
  const std::size_t N = h.size() - 1;
  std::vector<double> theta(N, 0.0);
  for (std::size_t n = 1; n <= N; ++n) {
    double acc = static_cast<double>(n) * h[n];
    for (std::size_t j = 1; j < n; ++j) acc -= theta[j - 1] * h[n - j];
    theta[n - 1] = acc;
  }
  return theta;
}

struct DivisibilityReport {
  bool divisible = true;
  // 1-based index of the first genuinely negative recovered weight; 0 if none.
  std::uint64_t first_negative = 0;
  std::vector<double> theta;
};

// A normalized sequence (h_m) is a component-weight normalization for SOME
// nonnegative weights iff every recovered theta_n is >= 0.  Tiny negative
// values from float cancellation are forgiven relative to the n h_n scale.
inline DivisibilityReport is_infinitely_divisible(const std::vector<double>& h,
                                                  double tol_factor = 1e-12) {
  DivisibilityReport rep;
  rep.theta = theta_from_h(h);
  for (std::size_t n = 1; n <= rep.theta.size(); ++n) {
    double scale = std::abs(static_cast<double>(n) * h[n]);
    if (rep.theta[n - 1] < -tol_factor * std::max(scale, 1.0)) {
      rep.divisible = false;
      rep.first_negative = n;
      break;
    }
  }
  return rep;
}

}  // namespace partitia
