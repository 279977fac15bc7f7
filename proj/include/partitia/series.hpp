#pragma once

// Dense truncated power series over double, indexed by power (coeff[k] is
// the t^k coefficient).  Just enough algebra for compositional inversion of
// a series with vanishing constant term, which the large-deviation expansion
// code needs.

#include <stdexcept>
#include <vector>

namespace partitia {

using Series = std::vector<double>;

inline Series series_mul(const Series& a, const Series& b, std::size_t trunc) {
  Series c(trunc + 1, 0.0);
  for (std::size_t i = 0; i <= trunc && i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    const std::size_t jmax = std::min(b.size() - 1, trunc - i);
    for (std::size_t j = 0; j <= jmax; ++j) c[i + j] += a[i] * b[j];
  }
  return c;
}

// Compositional inverse: given y(t) = sum_{k>=1} a_k t^k with a_1 != 0,
// return t(y) = sum_{k>=1} b_k y^k to the same truncation order.
// Coefficients are extracted order by order from t = (y - sum_{k>=2} a_k t^k) / a_1.
inline Series series_revert(const Series& a, std::size_t trunc) {
  if (a.size() < 2 || a[0] != 0.0 || a[1] == 0.0)
    throw std::invalid_argument("series_revert: need a0 = 0, a1 != 0");
  Series b(trunc + 1, 0.0);
  b[1] = 1.0 / a[1];
  // powers[k] holds t(y)^k truncated; rebuilt each order for clarity (orders
  // involved are tiny).
  for (std::size_t m = 2; m <= trunc; ++m) {
    Series t_m(b.begin(), b.begin() + m);  // known coefficients up to y^{m-1}
    t_m.resize(trunc + 1, 0.0);
    Series power = t_m;  // t^k
    double corr = 0.0;   // y^m coefficient of sum_{k>=2} a_k t^k
    for (std::size_t k = 2; k <= m && k < a.size(); ++k) {
      power = series_mul(power, t_m, m);
      if (a[k] != 0.0) corr += a[k] * power[m];
    }
    b[m] = -corr / a[1];
  }
  return b;
}

// y(t) evaluated with Horner at scalar t.
inline double series_eval(const Series& a, double t) {
  double acc = 0.0;
  for (std::size_t k = a.size(); k-- > 0;) acc = acc * t + a[k];
  return acc;
}

}  // namespace partitia
