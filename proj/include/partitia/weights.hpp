#pragma once

// Component weight sequences theta_j >= 0 and the certified infinite sums
// over them that the rest of the toolkit consumes.  Four analytic families
// are built in; finite user tables are accepted as-is and evaluating one
// beyond its last entry is a hard error rather than a silent extrapolation.
//
// The central primitive is theta_power_sum: sum_j theta_j j^p z^j with an
// explicit truncation point and a rigorous upper bound on the dropped tail
// (Euler-Maclaurin for power-law tails, monotone integral comparison for
// stretched-exponential tails, geometric domination for z < 1).

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "partitia/special.hpp"

namespace partitia {

enum class WeightKind {
  kConstant,      // theta_j = theta
  kAlgebraic,     // theta_j = j^gamma
  kStretchedJ,    // theta_j = j * exp(-j^gamma)
  kStretched,     // theta_j = exp(-j^gamma)
  kCustom,        // finite table
};

struct TailCertificate {
  std::uint64_t terms_used = 0;
  double tail_bound = 0.0;  // upper bound on the dropped mass
  bool exact = false;       // finite sum, nothing dropped
};

class WeightSequence {
 public:
  static WeightSequence constant(double theta) {
    if (!(theta > 0.0)) throw std::invalid_argument("constant weights need theta > 0");
    WeightSequence w;
    w.kind_ = WeightKind::kConstant;
    w.param_ = theta;
    return w;
  }

  static WeightSequence algebraic(double gamma) {
    WeightSequence w;
    w.kind_ = WeightKind::kAlgebraic;
    w.param_ = gamma;
    return w;
  }

  static WeightSequence stretched_j(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("stretched weights need 0 < gamma < 1");
    WeightSequence w;
    w.kind_ = WeightKind::kStretchedJ;
    w.param_ = gamma;
    return w;
  }

  static WeightSequence stretched(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("stretched weights need 0 < gamma < 1");
    WeightSequence w;
    w.kind_ = WeightKind::kStretched;
    w.param_ = gamma;
    return w;
  }

  static WeightSequence custom(std::vector<double> table) {
    for (double t : table)
      if (!(t >= 0.0)) throw std::invalid_argument("custom weights must be >= 0");
    WeightSequence w;
    w.kind_ = WeightKind::kCustom;
    w.table_ = std::move(table);
    return w;
  }

  WeightKind kind() const { return kind_; }
  double param() const { return param_; }

  // Largest j with a defined weight; unbounded for analytic families.
  std::uint64_t max_j() const {
    return kind_ == WeightKind::kCustom ? table_.size()
                                        : std::numeric_limits<std::uint64_t>::max();
  }

  double theta(std::uint64_t j) const {
    if (j == 0) throw std::invalid_argument("theta: j starts at 1");
    switch (kind_) {
      case WeightKind::kConstant:
        return param_;
      case WeightKind::kAlgebraic:
        return std::pow(static_cast<double>(j), param_);
      case WeightKind::kStretchedJ:
        return static_cast<double>(j) *
               std::exp(-std::pow(static_cast<double>(j), param_));
      case WeightKind::kStretched:
        return std::exp(-std::pow(static_cast<double>(j), param_));
      case WeightKind::kCustom:
        if (j > table_.size())
          throw std::out_of_range("custom weight table has no entry for j = " +
                                  std::to_string(j));
        return table_[j - 1];
    }
    return 0.0;
  }

  double log_theta(std::uint64_t j) const {
    switch (kind_) {
      case WeightKind::kConstant:
        return std::log(param_);
      case WeightKind::kAlgebraic:
        return param_ * std::log(static_cast<double>(j));
      case WeightKind::kStretchedJ:
        return std::log(static_cast<double>(j)) -
               std::pow(static_cast<double>(j), param_);
      case WeightKind::kStretched:
        return -std::pow(static_cast<double>(j), param_);
      case WeightKind::kCustom:
        return std::log(theta(j));
    }
    return -std::numeric_limits<double>::infinity();
  }

  std::vector<double> prefix(std::uint64_t n) const {
    std::vector<double> out(n);
    for (std::uint64_t j = 1; j <= n; ++j) out[j - 1] = theta(j);
    return out;
  }

  // Whether sum_j theta_j j^p converges.
  bool power_sum_finite(double p) const {
    switch (kind_) {
      case WeightKind::kConstant:
        return p < -1.0;
      case WeightKind::kAlgebraic:
        return param_ + p < -1.0;
      case WeightKind::kStretchedJ:
      case WeightKind::kStretched:
      case WeightKind::kCustom:
        return true;
    }
    return false;
  }

  // sum_{j >= 1} theta_j j^p z^j for 0 < z <= 1, with a certified tail.
  // Returns +infinity when the series diverges.
  double theta_power_sum(double p, double z, double rel_eps = 1e-14,
                         TailCertificate* cert = nullptr) const {
    if (!(z > 0.0 && z <= 1.0))
      throw std::invalid_argument("theta_power_sum: need 0 < z <= 1");
    if (kind_ == WeightKind::kCustom) {
      double sum = 0.0;
      for (std::uint64_t j = 1; j <= table_.size(); ++j)
        sum += table_[j - 1] * std::pow(static_cast<double>(j), p) *
               std::pow(z, static_cast<double>(j));
      if (cert) *cert = {table_.size(), 0.0, true};
      return sum;
    }
    if (z == 1.0 && !power_sum_finite(p)) {
      if (cert) *cert = {0, std::numeric_limits<double>::infinity(), false};
      return std::numeric_limits<double>::infinity();
    }
    if (z == 1.0 &&
        (kind_ == WeightKind::kConstant || kind_ == WeightKind::kAlgebraic)) {
      // pure p-series: partial sum plus the Euler-Maclaurin tail, which is an
      // estimate accurate to its own next correction term, not just a bound
      const double g = kind_ == WeightKind::kConstant ? 0.0 : param_;
      const double scale = kind_ == WeightKind::kConstant ? param_ : 1.0;
      const double s = -(g + p);
      const std::uint64_t J = 64;
      double sum = 0.0;
      for (std::uint64_t i = 1; i <= J; ++i)
        sum += std::pow(static_cast<double>(i), -s);
      sum += p_series_tail(s, J);
      const double x = static_cast<double>(J);
      const double rem = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) *
                         std::pow(x, -s - 5.0) / 30240.0;
      if (cert) *cert = {J, scale * std::abs(rem), false};
      return scale * sum;
    }
    double sum = 0.0;
    std::uint64_t j = 0;
    double logz = std::log(z);
    const std::uint64_t j_start_tail = 64;
    for (;;) {
      ++j;
      double term = std::exp(log_theta(j) + p * std::log(static_cast<double>(j)) +
                             static_cast<double>(j) * logz);
      sum += term;
      if (j < j_start_tail) continue;
      if (j > (1u << 24)) break;  // safety valve; certificates catch this
      double tail = tail_bound(p, z, j);
      if (tail <= rel_eps * std::max(sum, 1e-300)) {
        if (cert) *cert = {j, tail, false};
        return sum + 0.0;
      }
    }
    if (cert) *cert = {j, tail_bound(p, z, j), false};
    return sum;
  }

  // Upper bound on sum_{i > j} theta_i i^p z^i.
  double tail_bound(double p, double z, std::uint64_t j) const {
    const double x = static_cast<double>(j);
    switch (kind_) {
      case WeightKind::kConstant:
      case WeightKind::kAlgebraic: {
        const double g = kind_ == WeightKind::kConstant ? 0.0 : param_;
        const double scale = kind_ == WeightKind::kConstant ? param_ : 1.0;
        if (z == 1.0) return scale * p_series_tail(-(g + p), j);
        // geometric domination: term ratio <= z * (1+1/j)^(g+p) eventually
        double r = z * std::pow(1.0 + 1.0 / x, std::max(0.0, g + p));
        if (r >= 1.0) return std::numeric_limits<double>::infinity();
        double next = scale * std::pow(x + 1.0, g + p) * std::pow(z, x + 1.0);
        return next / (1.0 - r);
      }
      case WeightKind::kStretchedJ:
      case WeightKind::kStretched: {
        // theta_i i^p z^i = i^q exp(-i^gamma) z^i with q = p (+1 for the
        // j-weighted family); bound by the monotone integral once past the
        // mode of the summand.
        const double q = p + (kind_ == WeightKind::kStretchedJ ? 1.0 : 0.0);
        const double g = param_;
        double mode = q > 0.0 ? std::pow(q / g, 1.0 / g) : 0.0;
        if (x < mode + 2.0) return std::numeric_limits<double>::infinity();
        if (z == 1.0) {
          // int_j^inf x^q exp(-x^g) dx = (1/g) Gamma((q+1)/g, j^g)
          double a = (q + 1.0) / g;
          double xg = std::pow(x, g);
          double upper = std::exp(std::lgamma(a)) * gamma_q(a, xg) / g;
          return upper;
        }
        // z < 1: z^i <= z^{j+1} across the tail, so the z = 1 integral bound
        // times that prefactor still dominates.
        double a = (q + 1.0) / g;
        double xg = std::pow(x, g);
        double upper = std::exp(std::lgamma(a)) * gamma_q(a, xg) / g;
        return upper * std::pow(z, x + 1.0);
      }
      case WeightKind::kCustom:
        return 0.0;
    }
    return std::numeric_limits<double>::infinity();
  }

  // sum_j theta_j / j z^j, the exponent in the generating-function identity
  // sum_m h_m z^m = exp(sum_j theta_j z^j / j).
  double levy_mass(double z = 1.0, double rel_eps = 1e-14,
                   TailCertificate* cert = nullptr) const {
    return theta_power_sum(-1.0, z, rel_eps, cert);
  }

  bool levy_mass_finite() const { return power_sum_finite(-1.0); }

  std::string describe() const {
    switch (kind_) {
      case WeightKind::kConstant:
        return "constant(" + std::to_string(param_) + ")";
      case WeightKind::kAlgebraic:
        return "algebraic(" + std::to_string(param_) + ")";
      case WeightKind::kStretchedJ:
        return "stretched-j(" + std::to_string(param_) + ")";
      case WeightKind::kStretched:
        return "stretched(" + std::to_string(param_) + ")";
      case WeightKind::kCustom:
        return "custom[" + std::to_string(table_.size()) + "]";
    }
    return "?";
  }

 private:
  WeightSequence() = default;
  WeightKind kind_ = WeightKind::kConstant;
  double param_ = 1.0;
  std::vector<double> table_;
};

}  // namespace partitia
