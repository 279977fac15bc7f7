#pragma once

// Large-deviation machinery for a single critical square-trap site.  The
// occupation law has cumulant generating function
//
//     phi(t) = sum_j (theta_j / j)(e^{tj} - 1),   finite for t <= 0,
//
// with cumulants kappa_k = phi^{(k)}(0) = sum_j j^{k-1} theta_j.  Solving
// phi'(t_tau) = kappa_1 + tau and expanding the dual value
//
//     -phi~(tau) = phi(t_tau) - (kappa_1 + tau) t_tau
//               = -tau^2 / (2 kappa_2) + tau^3 sum_{k>=0} lambda_k tau^k
//
// yields the correction series lambda_k by compositional reversion.  The
// finite-volume surface energy built from it is minimized to locate the
// droplet shift of the condensate occupation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "partitia/series.hpp"
#include "partitia/weights.hpp"

namespace partitia {

struct CramerData {
  double gamma = 0.0;          // stretch exponent the truncation rule keys on
  std::size_t truncation = 0;  // highest lambda index kept
  std::vector<double> kappa;   // kappa[k-1] = sum_j j^{k-1} theta_j
  std::vector<double> lambda;  // lambda[k] multiplies tau^{k+3}

  double kappa1() const { return kappa.at(0); }
  double sigma2() const { return kappa.at(1); }
};

// Number of correction orders required at stretch exponent gamma:
// floor(1/(1-gamma) - 2) + 1, clamped at zero.
inline std::size_t cramer_truncation(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("cramer_truncation: need 0 < gamma < 1");
  double v = std::floor(1.0 / (1.0 - gamma) - 2.0) + 1.0;
  return v <= 0.0 ? 0 : static_cast<std::size_t>(v);
}

// Cumulants and the lambda series for a weight family whose power sums all
// converge (stretched-exponential decay or a finite table).
inline CramerData cramer_series(const WeightSequence& w, double gamma,
                                std::size_t guard_orders = 2) {
  CramerData cd;
  cd.gamma = gamma;
  cd.truncation = cramer_truncation(gamma);
  // tau-order carried; the top guard orders absorb the reversion cutoff
  const std::size_t order = cd.truncation + 3 + guard_orders;
  cd.kappa.resize(order);
  for (std::size_t k = 1; k <= order; ++k) {
    if (!w.power_sum_finite(static_cast<double>(k) - 1.0))
      throw std::invalid_argument(
          "cramer_series: cumulant " + std::to_string(k) + " diverges");
    cd.kappa[k - 1] = w.theta_power_sum(static_cast<double>(k) - 1.0, 1.0);
  }
  // tau(t) = phi'(t) - kappa_1 = sum_{m>=1} kappa_{m+1} t^m / m!
  Series tau(order, 0.0);
  double fact = 1.0;
  for (std::size_t m = 1; m < order; ++m) {
    fact *= static_cast<double>(m);
    tau[m] = cd.kappa[m] / fact;
  }
  const Series t_of_tau = series_revert(tau, order);
  // phi(t) - kappa_1 t = sum_{m>=2} kappa_m t^m / m!, composed with t(tau)
  std::vector<double> c(order + 1, 0.0);
  fact = 1.0;
  for (std::size_t m = 2; m <= order; ++m) {
    fact = 1.0;
    for (std::size_t i = 2; i <= m; ++i) fact *= static_cast<double>(i);
    c[m] = cd.kappa[m - 1] / fact;
  }
  Series dual(order + 1, 0.0);
  for (std::size_t m = order + 1; m-- > 0;) {
    dual = series_mul(dual, t_of_tau, order);
    dual.resize(order + 1, 0.0);
    dual[0] += c[m];
  }
  // subtract tau * t(tau)
  for (std::size_t k = 1; k <= order; ++k)
    dual[k] -= k - 1 < t_of_tau.size() ? t_of_tau[k - 1] : 0.0;
  cd.lambda.assign(cd.truncation + 1, 0.0);
  for (std::size_t k = 0; k <= cd.truncation; ++k) cd.lambda[k] = dual[k + 3];
  return cd;
}

// lambda_0 = kappa_3 / (6 kappa_2^3), the leading correction in closed form.
inline double lambda0_closed_form(const CramerData& cd) {
  return cd.kappa.at(2) / (6.0 * std::pow(cd.kappa.at(1), 3));
}

struct LegendreFit {
  std::vector<double> lambda;  // fitted coefficients, index k multiplies tau^k
  double tau_max = 0.0;
};

// Re-derive the lambda series without the reversion code path: solve
// phi'(t) = kappa_1 + tau by Newton on a grid of negative tau, form
// ( -phi~(tau) + tau^2/(2 kappa_2) ) / tau^3, and least-squares fit a
// polynomial in tau/tau_max.  The fit runs in the shifted Legendre basis,
// which stays well conditioned on the uniform grid; monomial normal
// equations would lose several digits of the subleading coefficients.
inline LegendreFit legendre_lambda_fit(const WeightSequence& w,
                                       const CramerData& cd, int points = 64,
                                       int degree = -1, double tau_max = 0.0) {
  if (degree < 0) degree = static_cast<int>(cd.truncation) + 5;
  if (points <= degree)
    throw std::invalid_argument("legendre_lambda_fit: need points > degree");
  const double k2 = cd.sigma2();
  const double k3 = std::abs(cd.kappa.at(2));
  if (!(tau_max > 0.0))
    tau_max = 0.1 * k2 * k2 / std::max(k3, std::pow(k2, 1.5));
  const double eps = 1e-15;
  // phi(t) = sum_j (theta_j / j) (e^{t j} - 1) summed with expm1: the dual
  // below shrinks like tau^3, so differencing two separately truncated
  // series would drown the small-tau grid points in tolerance noise
  auto phi = [&](double t) {
    double acc = 0.0;
    const std::uint64_t j_cap = std::min<std::uint64_t>(w.max_j(), 1u << 22);
    for (std::uint64_t j = 1; j <= j_cap; ++j) {
      const double term = w.theta(j) / static_cast<double>(j) *
                          std::expm1(t * static_cast<double>(j));
      acc += term;
      if (j >= 64 && std::abs(term) <= 1e-18 * std::abs(acc)) break;
    }
    return acc;
  };
  auto phi_p = [&](double t) {
    return w.theta_power_sum(0.0, std::exp(t), eps);
  };
  auto phi_pp = [&](double t) {
    return w.theta_power_sum(1.0, std::exp(t), eps);
  };
  std::vector<double> xs(points), ys(points);
  for (int i = 0; i < points; ++i) {
    const double tau = -tau_max * static_cast<double>(i + 1) / points;
    double t = tau / k2;
    for (int it = 0; it < 80; ++it) {
      double f = phi_p(t) - (cd.kappa1() + tau);
      double step = f / phi_pp(t);
      t -= step;
      if (t > 0.0) t = 0.5 * (t + step);  // stay in the finite half-line
      if (std::abs(f) <= 1e-15 * cd.kappa1() && std::abs(step) <= 1e-14 * std::abs(t))
        break;
    }
    const double dual = phi(t) - (cd.kappa1() + tau) * t;
    xs[i] = tau / tau_max;
    ys[i] = (dual + tau * tau / (2.0 * k2)) / (tau * tau * tau);
  }
  // weighted normal equations in long double over P_k(2v - 1) with
  // v = -tau/tau_max; the y values divide the dual by tau^3, so their
  // absolute noise grows like v^{-3} and the weights v^3 equalize it
  const int m = degree + 1;
  std::vector<long double> ata(static_cast<std::size_t>(m) * m, 0.0L);
  std::vector<long double> atb(m, 0.0L);
  for (int i = 0; i < points; ++i) {
    const long double v = -static_cast<long double>(xs[i]);
    const long double x = 2.0L * v - 1.0L;
    const long double wgt = v * v * v;
    std::vector<long double> row(m);
    for (int a = 0; a < m; ++a) {
      if (a == 0)
        row[a] = 1.0L;
      else if (a == 1)
        row[a] = x;
      else
        row[a] = ((2.0L * a - 1.0L) * x * row[a - 1] -
                  (a - 1.0L) * row[a - 2]) /
                 static_cast<long double>(a);
    }
    const long double w2 = wgt * wgt;
    for (int a = 0; a < m; ++a) {
      atb[a] += row[a] * w2 * ys[i];
      for (int b = 0; b < m; ++b)
        ata[static_cast<std::size_t>(a) * m + b] += row[a] * row[b] * w2;
    }
  }
  for (int col = 0; col < m; ++col) {  // Gaussian elimination, partial pivot
    int piv = col;
    for (int r = col + 1; r < m; ++r)
      if (std::abs(static_cast<double>(ata[static_cast<std::size_t>(r) * m + col])) >
          std::abs(static_cast<double>(ata[static_cast<std::size_t>(piv) * m + col])))
        piv = r;
    for (int cc = 0; cc < m; ++cc)
      std::swap(ata[static_cast<std::size_t>(col) * m + cc],
                ata[static_cast<std::size_t>(piv) * m + cc]);
    std::swap(atb[col], atb[piv]);
    for (int r = col + 1; r < m; ++r) {
      long double f = ata[static_cast<std::size_t>(r) * m + col] /
                      ata[static_cast<std::size_t>(col) * m + col];
      for (int cc = col; cc < m; ++cc)
        ata[static_cast<std::size_t>(r) * m + cc] -=
            f * ata[static_cast<std::size_t>(col) * m + cc];
      atb[r] -= f * atb[col];
    }
  }
  std::vector<long double> coef(m, 0.0L);
  for (int r = m; r-- > 0;) {
    long double acc = atb[r];
    for (int cc = r + 1; cc < m; ++cc)
      acc -= ata[static_cast<std::size_t>(r) * m + cc] * coef[cc];
    coef[r] = acc / ata[static_cast<std::size_t>(r) * m + r];
  }
  // collapse the Legendre expansion to monomials in v, then unscale; the
  // sign alternates because tau = -tau_max v
  std::vector<long double> mono(m, 0.0L);
  std::vector<long double> prev(m, 0.0L), cur(m, 0.0L), next(m, 0.0L);
  prev[0] = 1.0L;
  if (m > 1) {
    cur[0] = -1.0L;
    cur[1] = 2.0L;
  }
  for (int k = 0; k < m; ++k) {
    const std::vector<long double>& pk = (k == 0) ? prev : cur;
    for (int j = 0; j <= k; ++j) mono[j] += coef[k] * pk[j];
    if (k >= 1 && k + 1 < m) {
      for (int j = 0; j <= k + 1; ++j) {
        long double shifted = (j > 0) ? 2.0L * cur[j - 1] : 0.0L;
        next[j] = ((2.0L * k + 1.0L) * (shifted - cur[j]) -
                   static_cast<long double>(k) * prev[j]) /
                  (k + 1.0L);
      }
      prev = cur;
      cur = next;
    }
  }
  LegendreFit fit;
  fit.tau_max = tau_max;
  fit.lambda.resize(m);
  double scale = 1.0;
  for (int a = 0; a < m; ++a) {
    fit.lambda[a] = static_cast<double>(mono[a]) / scale;
    scale *= -tau_max;
  }
  return fit;
}

// f_L(Delta) = ((rho - rho_c) L^d - Delta)^gamma
//            + Delta^2 / (2 sigma_c^2 (L^d - 1))
//            - (Delta^3 / (L^d - 1)^2) sum_{k=0}^t lambda_k (Delta / (L^d - 1))^k
// on 0 < Delta < (rho - rho_c) L^d.
struct SurfaceEnergy {
  double gamma = 0.0;
  double rho = 0.0;
  double rho_c = 0.0;
  double sigma2 = 0.0;
  double volume = 0.0;  // L^d
  std::vector<double> lambda;

  double max_shift() const { return (rho - rho_c) * volume; }

  double operator()(double delta) const {
    const double head = max_shift() - delta;
    const double v1 = volume - 1.0;
    double corr = 0.0;
    for (std::size_t k = lambda.size(); k-- > 0;)
      corr = corr * (delta / v1) + lambda[k];
    return std::pow(head, gamma) + delta * delta / (2.0 * sigma2 * v1) -
           delta * delta * delta / (v1 * v1) * corr;
  }

  double derivative(double delta) const {
    const double head = max_shift() - delta;
    const double v1 = volume - 1.0;
    double corr = 0.0;
    for (std::size_t k = lambda.size(); k-- > 0;)
      corr = corr * (delta / v1) + static_cast<double>(k + 3) * lambda[k];
    return -gamma * std::pow(head, gamma - 1.0) + delta / (sigma2 * v1) -
           delta * delta * corr / (v1 * v1);
  }

  double second_derivative(double delta) const {
    const double head = max_shift() - delta;
    const double v1 = volume - 1.0;
    double corr = 0.0;
    for (std::size_t k = lambda.size(); k-- > 0;)
      corr = corr * (delta / v1) + static_cast<double>((k + 3) * (k + 2)) * lambda[k];
    return gamma * (1.0 - gamma) * std::pow(head, gamma - 2.0) +
           1.0 / (sigma2 * v1) - delta * corr / (v1 * v1);
  }
};

inline SurfaceEnergy surface_energy(const CramerData& cd, double rho, double L,
                                    int d) {
  if (!(rho > cd.kappa1()))
    throw std::invalid_argument("surface_energy: need a supercritical density");
  SurfaceEnergy f;
  f.gamma = cd.gamma;
  f.rho = rho;
  f.rho_c = cd.kappa1();
  f.sigma2 = cd.sigma2();
  f.volume = std::pow(L, d);
  f.lambda = cd.lambda;
  return f;
}

struct DropletShift {
  double shift = 0.0;             // minimizing Delta_L
  double energy = 0.0;            // f_L at the minimizer
  double asymptotic_ratio = 0.0;  // Delta_L / (gamma sigma_c^2 (rho-rho_c)^{gamma-1} L^{d gamma})
};

// Global minimum of the surface energy.  Unimodality is not established, so
// golden-section runs over log-spaced decade windows cover the domain and a
// Newton polish sharpens the best candidate.
inline DropletShift droplet_shift(const CramerData& cd, double rho, double L,
                                  int d) {
  const SurfaceEnergy f = surface_energy(cd, rho, L, d);
  const double D = f.max_shift();
  double best_x = 0.5 * D;
  double best_f = std::numeric_limits<double>::infinity();
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int m = 0; m < 13; ++m) {
    double hi = D * std::pow(10.0, -m) * (m == 0 ? 1.0 - 1e-9 : 1.0);
    double lo = D * std::pow(10.0, -m - 1);
    double a = lo, b = hi;
    double x1 = b - golden * (b - a), x2 = a + golden * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 90; ++it) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - golden * (b - a);
        f1 = f(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + golden * (b - a);
        f2 = f(x2);
      }
    }
    double x = f1 <= f2 ? x1 : x2;
    double fx = std::min(f1, f2);
    if (fx < best_f) {
      best_f = fx;
      best_x = x;
    }
  }
  for (int it = 0; it < 40; ++it) {  // Newton polish inside the domain
    double fpp = f.second_derivative(best_x);
    if (!(fpp > 0.0)) break;
    double step = f.derivative(best_x) / fpp;
    double next = best_x - step;
    if (!(next > 0.0 && next < D)) break;
    best_x = next;
    if (std::abs(step) <= 1e-14 * best_x) break;
  }
  best_f = f(best_x);
  DropletShift out;
  out.shift = best_x;
  out.energy = best_f;
  out.asymptotic_ratio =
      best_x / (cd.gamma * cd.sigma2() *
                std::pow(rho - cd.kappa1(), cd.gamma - 1.0) *
                std::pow(L, static_cast<double>(d) * cd.gamma));
  return out;
}

}  // namespace partitia
