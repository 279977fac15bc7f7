#pragma once

// Adaptive Gauss-Kronrod (7,15) quadrature on finite intervals, plus a
// mapped variant for semi-infinite upper limits.  The embedded 7-point Gauss
// rule supplies the error estimate that drives interval bisection.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace partitia {

namespace qk15 {
// Kronrod abscissae on [0,1] (symmetric) and the paired weights; the Gauss-7
// nodes are the odd-indexed entries.
inline constexpr double xgk[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
    0.7415311855993944, 0.5860872354676911, 0.4058451513773972,
    0.2077849550078985, 0.0};
inline constexpr double wgk[8] = {
    0.0229353220105292, 0.0630920926299785, 0.1047900103222502,
    0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
    0.2044329400752989, 0.2094821410847278};
inline constexpr double wg[4] = {0.1294849661688697, 0.2797053914892767,
                                 0.3818300505051189, 0.4179591836734694};
}  // namespace qk15

struct QuadResult {
  double value = 0.0;
  double error = 0.0;   // accumulated error estimate
  bool converged = true;
};

namespace detail {

template <class F>
inline void kronrod15(const F& f, double a, double b, double& val, double& err) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double res_g = fc * qk15::wg[3];
  double res_k = fc * qk15::wgk[7];
  for (int i = 0; i < 7; ++i) {
    const double dx = h * qk15::xgk[i];
    const double fs = f(c - dx) + f(c + dx);
    res_k += qk15::wgk[i] * fs;
    if (i % 2 == 1) res_g += qk15::wg[i / 2] * fs;
  }
  val = res_k * h;
  const double diff = std::abs(res_k - res_g) * h;
  // QUADPACK's sharpened estimate; conservative fallback for tiny diffs.
  err = diff > 0.0 ? diff * std::min(1.0, std::pow(200.0 * diff / std::abs(val + 1e-300), 1.5)) + 1e-300
                   : 0.0;
  err = std::max(err, diff * 1e-6);
}

}  // namespace detail

// Integrate f over [a,b] to absolute tolerance abs_tol or relative tolerance
// rel_tol, whichever is laxer, by recursive bisection.
template <class F>
inline QuadResult integrate(const F& f, double a, double b, double rel_tol = 1e-10,
                            double abs_tol = 0.0, int max_depth = 48) {
  struct Seg {
    double a, b, val, err;
    int depth;
  };
  if (!(b > a)) return {0.0, 0.0, true};
  double v0, e0;
  detail::kronrod15(f, a, b, v0, e0);
  std::vector<Seg> stack{{a, b, v0, e0, 0}};
  double total_val = 0.0, total_err = 0.0;
  bool ok = true;
  // 1e4 segments bounds work on pathological integrands.
  int budget = 10000;
  while (!stack.empty()) {
    Seg s = stack.back();
    stack.pop_back();
    const double tol = std::max(abs_tol, rel_tol * std::abs(s.val)) *
                       ((s.b - s.a) / (b - a));
    const double local_tol = std::max(tol, rel_tol * std::abs(v0) * (s.b - s.a) / (b - a));
    if (s.err <= local_tol || s.depth >= max_depth || --budget <= 0) {
      if (s.err > local_tol && s.depth >= max_depth) ok = false;
      if (budget <= 0) ok = false;
      total_val += s.val;
      total_err += s.err;
      continue;
    }
    const double m = 0.5 * (s.a + s.b);
    double vl, el, vr, er;
    detail::kronrod15(f, s.a, m, vl, el);
    detail::kronrod15(f, m, s.b, vr, er);
    stack.push_back({s.a, m, vl, el, s.depth + 1});
    stack.push_back({m, s.b, vr, er, s.depth + 1});
  }
  return {total_val, total_err, ok};
}

// Integrate f over [a, infinity) via the rational map x = a + t/(1-t),
// t in [0,1).  The integrand must decay fast enough for the mapped function
// to vanish at t -> 1; callers pass functions with (super)polynomial decay.
template <class F>
inline QuadResult integrate_to_inf(const F& f, double a, double rel_tol = 1e-10,
                                   double abs_tol = 0.0) {
  auto mapped = [&](double t) {
    if (t >= 1.0) return 0.0;
    const double om = 1.0 - t;
    const double x = a + t / om;
    const double jac = 1.0 / (om * om);
    double fx = f(x);
    if (!std::isfinite(fx)) return 0.0;
    return fx * jac;
  };
  return integrate(mapped, 0.0, 1.0, rel_tol, abs_tol);
}

}  // namespace partitia
