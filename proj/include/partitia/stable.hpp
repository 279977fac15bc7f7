#pragma once

// Reference samplers for the fluctuation limit laws, each pinned to the
// transform it must reproduce and validated empirically by the test suite.
//
//  * totally skewed alpha-stable draws by the Chambers-Mallows-Stuck angle
//    construction, scale sigma, with E exp(-tX) = exp(sigma^a t^a / |cos(pi a/2)|)
//    for t >= 0 and 1 < a < 2;
//  * the centered Gamma series  Y = sum_{0<|x|<=R} (theta - G_x) / |x|^delta
//    plus a Gaussian compensator carrying the variance of the dropped tail;
//  * the Poisson cluster sum  sum_j j N_j, N_j ~ Poisson(theta_j / j), whose
//    pmf is h_k e^{-sum theta_j / j};
//  * the constant b in E exp(tZ) = exp(b t^{|g| + d/delta}) for algebraic
//    weights of negative exponent, by radial quadrature with the endpoint
//    singularity removed analytically.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "partitia/htable.hpp"
#include "partitia/potential.hpp"
#include "partitia/quadrature.hpp"
#include "partitia/rng.hpp"
#include "partitia/special.hpp"
#include "partitia/weights.hpp"

namespace partitia {

// M(a) = int_0^inf (e^{-y} - 1 + y) y^{-1-a} dy = Gamma(2-a) / (a(a-1)),
// the Laplace constant of the centered one-sided stable limit.
inline double stable_tail_constant(double alpha) {
  if (!(alpha > 1.0 && alpha < 2.0))
    throw std::invalid_argument("stable_tail_constant: need 1 < alpha < 2");
  return std::tgamma(2.0 - alpha) / (alpha * (alpha - 1.0));
}

// Strictly stable, totally skewed to the right (beta = 1), scale sigma,
// zero shift; optionally negated on output.  For 1 < alpha < 2 and t >= 0,
//   E exp(-t X) = exp( sigma^alpha t^alpha / |cos(pi alpha / 2)| ).
class StableSampler {
 public:
  StableSampler(double alpha, double sigma, bool negate = false)
      : alpha_(alpha), sigma_(sigma), negate_(negate) {
    if (!(alpha > 1.0 && alpha < 2.0))
      throw std::invalid_argument("StableSampler: need 1 < alpha < 2");
    if (!(sigma > 0.0))
      throw std::invalid_argument("StableSampler: need sigma > 0");
    const double t = std::tan(0.5 * M_PI * alpha_);
    angle_ = std::atan(t) / alpha_;
    scale_ = sigma_ * std::pow(1.0 + t * t, 0.5 / alpha_);
  }

  double alpha() const { return alpha_; }
  double sigma() const { return sigma_; }

  // log E exp(-t X) for the un-negated draw, t >= 0.
  double log_laplace(double t) const {
    return std::pow(sigma_ * t, alpha_) /
           std::abs(std::cos(0.5 * M_PI * alpha_));
  }

  double sample(Rng& rng) const {
    const double u = M_PI * (rng.uniform() - 0.5);  // uniform on (-pi/2, pi/2)
    const double w = rng.exponential();
    const double s = alpha_ * (u + angle_);
    double x = scale_ * std::sin(s) / std::pow(std::cos(u), 1.0 / alpha_) *
               std::pow(std::cos(u - s) / w, (1.0 - alpha_) / alpha_);
    return negate_ ? -x : x;
  }

 private:
  double alpha_;
  double sigma_;
  bool negate_;
  double angle_;
  double scale_;
};

// The single-site overflow limit for theta_j = j^{-alpha}, 1 < alpha < 2:
// E exp(-t Y) = exp( M(alpha) t^alpha / alpha ).
inline StableSampler heavy_tail_limit_sampler(double alpha) {
  const double m = stable_tail_constant(alpha);
  const double c = std::abs(std::cos(0.5 * M_PI * alpha));
  return StableSampler(alpha, std::pow(m * c / alpha, 1.0 / alpha), false);
}

// The trap fluctuation limit for algebraic weights of negative exponent:
// E exp(t Z) = exp( b t^a ), a = |gamma| + d/delta, realized as a negated
// totally skewed stable draw.
inline StableSampler algebraic_trap_limit_sampler(double b, double a) {
  const double c = std::abs(std::cos(0.5 * M_PI * a));
  return StableSampler(a, std::pow(b * c, 1.0 / a), true);
}

// Y = sum_{0 < |x| <= R} (theta - G_x) / |x|^delta + N(0, tail_variance),
// G_x iid Gamma(theta, 1); the Gaussian replaces the variance
// theta * sum_{|x| > R} |x|^{-2 delta} of the dropped sites, so the cutoff
// error is only the non-Gaussianity of that tail.  Needs 2 delta > d.
class GammaSeriesSampler {
 public:
  GammaSeriesSampler(double theta, double delta, int d, std::int64_t R)
      : theta_(theta), delta_(delta) {
    if (!(theta > 0.0)) throw std::invalid_argument("gamma series: theta > 0");
    if (d < 1 || d > 3) throw std::invalid_argument("gamma series: d must be 1..3");
    if (!(2.0 * delta > static_cast<double>(d)))
      throw std::invalid_argument("gamma series: need 2 delta > d");
    if (R < 1) throw std::invalid_argument("gamma series: need R >= 1");
    auto push = [&](double r2) {
      coef_.push_back(std::pow(r2, -0.5 * delta_));
    };
    if (d == 1) {
      for (std::int64_t x = 1; x <= R; ++x) {
        push(static_cast<double>(x * x));
        push(static_cast<double>(x * x));
      }
      tail_variance_ = theta_ * 2.0 * p_series_tail(2.0 * delta_, static_cast<std::uint64_t>(R));
    } else {
      // Euclidean cutoff |x| <= R; remainder bounded by comparing each unit
      // cell beyond R-sqrt(d) with the radial integral
      const std::int64_t B = R;
      double inner = 0.0;
      for (std::int64_t x = -B; x <= B; ++x)
        for (std::int64_t y = -B; y <= B; ++y) {
          if (d == 2) {
            double r2 = static_cast<double>(x * x + y * y);
            if (r2 > 0.0 && r2 <= static_cast<double>(R * R)) {
              push(r2);
              inner += std::pow(r2, -delta_);
            }
          } else {
            for (std::int64_t z = -B; z <= B; ++z) {
              double r2 = static_cast<double>(x * x + y * y + z * z);
              if (r2 > 0.0 && r2 <= static_cast<double>(R * R)) {
                push(r2);
                inner += std::pow(r2, -delta_);
              }
            }
          }
        }
      const double dd = static_cast<double>(d);
      const double edge = static_cast<double>(R) - std::sqrt(dd);
      if (edge <= 1.0)
        throw std::invalid_argument("gamma series: R too small for the tail bound");
      tail_variance_ =
          theta_ * Potential::surface_area(d) *
          std::pow(edge, dd - 2.0 * delta_) / (2.0 * delta_ - dd);
      (void)inner;
    }
    series_variance_ = 0.0;
    for (double c : coef_) series_variance_ += theta_ * c * c;
  }

  std::size_t sites() const { return coef_.size(); }
  double series_variance() const { return series_variance_; }
  double tail_variance() const { return tail_variance_; }

  double sample(Rng& rng) const {
    double acc = 0.0;
    for (double c : coef_) acc += c * (theta_ - rng.gamma(theta_));
    return acc + std::sqrt(tail_variance_) * rng.normal();
  }

 private:
  double theta_;
  double delta_;
  std::vector<double> coef_;
  double series_variance_ = 0.0;
  double tail_variance_ = 0.0;
};

// sum_{j <= J} j N_j with independent N_j ~ Poisson(theta_j / j); the law of
// the gap between the largest site mass and the largest component size.
class PoissonClusterSampler {
 public:
  PoissonClusterSampler(const WeightSequence& w, std::uint64_t J)
      : rates_(J), table_(w.prefix(J)) {
    double mass = 0.0;
    for (std::uint64_t j = 1; j <= J; ++j) {
      rates_[j - 1] = w.theta(j) / static_cast<double>(j);
      mass += rates_[j - 1];
    }
    mass_ = mass;
    truncation_mass_ = w.tail_bound(-1.0, 1.0, J);
  }

  std::uint64_t sample(Rng& rng) const {
    std::uint64_t acc = 0;
    for (std::size_t j = 1; j <= rates_.size(); ++j)
      acc += j * rng.poisson(rates_[j - 1]);
    return acc;
  }

  // Exact pmf of the truncated sum: h_k e^{-sum_{j<=J} theta_j / j}; equals
  // the untruncated pmf for k <= J.
  double pmf(std::uint64_t k) const {
    if (k > table_.size())
      throw std::out_of_range("PoissonClusterSampler::pmf: k beyond the table");
    return std::exp(table_.log_h(k) - mass_);
  }

  // Upper bound on sum_{j > J} theta_j / j, the rate mass dropped by the cutoff.
  double truncation_mass() const { return truncation_mass_; }

 private:
  std::vector<double> rates_;
  HTable table_;
  double mass_ = 0.0;
  double truncation_mass_ = 0.0;
};

// b = -(Gamma(1+gamma)/|gamma|) int_{R^d} [ (1+|x|^delta)^{|gamma|}
//       - |x|^{delta |gamma|} - |gamma| |x|^{-delta(1+gamma)} ] dx,
// for -1 < gamma < 0 and 1 < d/delta < gamma + 2.  The last term integrates
// in closed form on [0,1]; the outer integrand evaluates through expm1 with
// a series switch where first-order cancellation sets in.
inline double b_coefficient(double gamma, double delta, int d,
                            double rel_tol = 1e-10) {
  if (!(gamma > -1.0 && gamma < 0.0))
    throw std::invalid_argument("b_coefficient: need -1 < gamma < 0");
  if (d < 1 || d > 3) throw std::invalid_argument("b_coefficient: d must be 1..3");
  const double dd = static_cast<double>(d);
  const double ratio = dd / delta;
  if (!(ratio > 1.0 && ratio < gamma + 2.0))
    throw std::invalid_argument("b_coefficient: need 1 < d/delta < gamma + 2");
  const double g = -gamma;  // |gamma| in (0,1)
  // inner segment: the singular term separately, in closed form
  auto inner_smooth = [&](double r) {
    return (std::pow(1.0 + std::pow(r, delta), g) - std::pow(r, delta * g)) *
           std::pow(r, dd - 1.0);
  };
  const double inner =
      integrate(inner_smooth, 0.0, 1.0, rel_tol).value -
      g / (dd - delta * (1.0 - g));
  // outer segment, substituting u = r^{-delta}:
  //   int_1^inf r^{delta g} E(u) r^{d-1} dr = (1/delta) int_0^1 u^{-a-1} E(u) du
  // with a = g + d/delta in (1, 2) and E(u) = (1+u)^g - 1 - g u.  The
  // binomial orders u^2..u^8 integrate in closed form; the remainder starts
  // at u^9, so its integrand is smooth on [0, 1].
  const double a = g + ratio;
  double coef[7];  // binomial coefficients c_2..c_8 of (1+u)^g
  double moments = 0.0;
  double ck = g * (g - 1.0) / 2.0;
  for (int k = 2; k <= 8; ++k) {
    coef[k - 2] = ck;
    moments += ck / (static_cast<double>(k) - a);
    ck *= (g - static_cast<double>(k)) / (static_cast<double>(k) + 1.0);
  }
  const double c9 = ck;
  auto remainder = [&](double u) -> double {
    if (!(u > 0.0)) return 0.0;
    if (u <= 0.9) {
      // tail of the binomial series; successive terms shrink by >= u
      double cc = c9;
      double p = std::pow(u, 9.0);
      double acc = 0.0;
      for (int k = 9; k < 4096; ++k) {
        acc += cc * p;
        cc *= (g - static_cast<double>(k)) / (static_cast<double>(k) + 1.0);
        p *= u;
        if (std::abs(cc * p) <= 1e-18 * std::abs(acc)) break;
      }
      return acc;
    }
    double poly = coef[6];
    for (int k = 7; k >= 2; --k) poly = poly * u + coef[k - 2];
    return std::expm1(g * std::log1p(u)) - g * u - poly * u * u;
  };
  auto rem_integrand = [&](double u) {
    return std::pow(u, -a - 1.0) * remainder(u);
  };
  const double outer =
      (moments + integrate(rem_integrand, 0.0, 1.0, rel_tol).value) / delta;
  const double total = inner + outer;
  const double b = -(std::tgamma(1.0 + gamma) / g) *
                   Potential::surface_area(d) * total;
  if (!(b > 0.0))
    throw std::logic_error("b_coefficient: positivity failed");
  return b;
}

}  // namespace partitia
