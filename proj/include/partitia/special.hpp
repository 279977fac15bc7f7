#pragma once

// Special functions backing the statistics and series code: regularized
// incomplete gamma (chi-square tails), the Kolmogorov distribution, normal
// CDF, and Euler-Maclaurin tails of p-series.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace partitia {

// Regularized lower incomplete gamma P(a,x); series expansion, valid for
// x < a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a,x); Lentz continued fraction, valid
// for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

inline double gamma_p(double a, double x) { return 1.0 - gamma_q(a, x); }

// Survival function of the chi-square distribution with k degrees of freedom.
inline double chi2_sf(double x, double k) { return gamma_q(0.5 * k, 0.5 * x); }

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440084436210485);
}

// Kolmogorov distribution tail Q(lambda) = P(sup|B| > lambda); both series,
// switched where they converge fastest.
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    const double pi = 3.14159265358979323846264338327950;
    double t = std::exp(-pi * pi / (8.0 * lambda * lambda));
    double sum = t + std::pow(t, 9.0) + std::pow(t, 25.0) + std::pow(t, 49.0);
    double p = std::sqrt(2.0 * pi) / lambda * sum;
    return 1.0 - std::min(1.0, p);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-18) break;
  }
  return std::max(0.0, 2.0 * sum);
}

// Tail sum_{j > J} j^{-s} for s > 1 by Euler-Maclaurin.  The magnitude of the
// first omitted correction bounds the error; with J >= 8 the result is
// accurate to near machine precision for the exponents used here.
inline double p_series_tail(double s, std::uint64_t J) {
  if (!(s > 1.0)) throw std::invalid_argument("p_series_tail: need s > 1");
  double x = static_cast<double>(J);
  if (J == 0) throw std::invalid_argument("p_series_tail: need J >= 1");
  double inv = 1.0 / x;
  double xs = std::pow(x, -s);
  // sum_{j >= J} = x^{1-s}/(s-1) + x^{-s}/2 + s x^{-s-1}/12
  //               - s(s+1)(s+2) x^{-s-3}/720 + ...
  double total = xs * x / (s - 1.0) + 0.5 * xs + s * xs * inv / 12.0 -
                 s * (s + 1.0) * (s + 2.0) * xs * inv * inv * inv / 720.0;
  return total - xs;  // drop j = J itself
}

// Riemann zeta for s > 1: direct partial sum plus the tail above.
inline double zeta(double s) {
  const std::uint64_t J = 64;
  double sum = 0.0;
  for (std::uint64_t j = 1; j <= J; ++j) sum += std::pow(static_cast<double>(j), -s);
  return sum + p_series_tail(s, J);
}

}  // namespace partitia
