#pragma once

// The infinite-volume density-activity relation
//
//     rho(z) = sum_{j>=1} theta_j z^j int_{R^d} e^{-j V(x)} dx,
//
// its critical point (z_c, rho_c), and the limit quantities downstream of
// the solved activity z_0(rho): per-size and per-occupation mass fractions,
// the condensate fraction, the free-energy limit with its entropy dual, and
// the fluctuation variance sigma_c^2 = sum_j j theta_j int e^{-jV}.
//
// A second evaluation route goes through the one-site normalization table,
//
//     rho(z) = int ( sum_{n>=1} n h_n u^n ) / ( sum_{n>=0} h_n u^n ) dx,
//     u = z e^{-V(x)}  (integrand 0 where V is infinite),
//
// kept free of the generating-function shortcut so the two routes verify
// the h recurrence against the direct series; a test pins their agreement.
//
// Closed-form potentials reduce every series here to theta_power_sum with
// its certified tails.  Custom radial profiles fall back to term-by-term
// summation with a midpoint integral-comparison tail estimate, which is an
// estimate rather than a bound; certificates say so via exact = false.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "partitia/htable.hpp"
#include "partitia/lattice.hpp"
#include "partitia/potential.hpp"
#include "partitia/quadrature.hpp"
#include "partitia/weights.hpp"

namespace partitia {

// Continuous-argument extension theta(x) of an analytic weight family;
// summand tails are integrated against it.
inline double theta_continuous(const WeightSequence& w, double x) {
  switch (w.kind()) {
    case WeightKind::kConstant:
      return w.param();
    case WeightKind::kAlgebraic:
      return std::pow(x, w.param());
    case WeightKind::kStretchedJ:
      return x * std::exp(-std::pow(x, w.param()));
    case WeightKind::kStretched:
      return std::exp(-std::pow(x, w.param()));
    case WeightKind::kCustom:
      throw std::logic_error("theta_continuous: finite tables have no extension");
  }
  return 0.0;
}

struct SigmaCResult {
  double value = std::numeric_limits<double>::infinity();
  bool finite = false;
};

struct TypicalLimits {
  double z0 = 0.0;
  double condensate_fraction = 0.0;
  std::vector<double> size_mass;        // [j-1] = limit of j R_j / n
  std::vector<double> occupation_mass;  // [k-1] = limit of k #{x: eta_x = k} / n
};

class DensitySeries {
 public:
  DensitySeries(WeightSequence w, Potential pot, int d, double rel_eps = 1e-12)
      : w_(std::move(w)), pot_(std::move(pot)), d_(d), rel_eps_(rel_eps) {
    if (d_ < 1 || d_ > 3)
      throw std::invalid_argument("DensitySeries: d must be 1, 2, or 3");
    if (pot_.is_square()) {
      p_ = 0.0;
      A_ = 1.0;
    } else if (pot_.kind() == PotentialKind::kPower) {
      // I_j = A j^{-p} with p = d/delta
      p_ = static_cast<double>(d_) / pot_.delta();
      A_ = Potential::surface_area(d_) *
           std::exp(std::lgamma(p_) - p_ * std::log(pot_.strength())) /
           pot_.delta();
    }
    init_critical_activity();
  }

  const WeightSequence& weights() const { return w_; }
  const Potential& potential() const { return pot_; }
  int dim() const { return d_; }

  double critical_activity() const { return z_c_; }

  // False when z_c was estimated by the ratio test on a finite table read as
  // the truncation of an infinite family.
  bool critical_activity_exact() const { return z_c_exact_; }

  // int_{R^d} e^{-j V(x)} dx; closed form except for custom radial profiles.
  double component_integral(std::uint64_t j) const {
    if (j == 0) throw std::invalid_argument("component_integral: j starts at 1");
    if (pot_.kind() != PotentialKind::kCustomRadial) {
      if (pot_.is_square()) return 1.0;
      return A_ * std::pow(static_cast<double>(j), -p_);
    }
    if (icache_.size() < j) icache_.resize(j, -1.0);
    double& slot = icache_[j - 1];
    if (slot < 0.0)
      slot = pot_.continuum_integral(static_cast<double>(j), d_, 1e-12);
    return slot;
  }

  // rho(z) by the component-size series.  Domain 0 <= z <= z_c.
  double rho(double z, TailCertificate* cert = nullptr) const {
    check_activity(z);
    if (z == 0.0) {
      if (cert) *cert = {0, 0.0, true};
      return 0.0;
    }
    return weighted_sum(0.0, z, cert);
  }

  // d rho / d z = (1/z) sum_j theta_j j I_j z^j.
  double rho_prime(double z) const {
    check_activity(z);
    if (z == 0.0)
      return w_.theta(1) * component_integral(1);
    return weighted_sum(1.0, z) / z;
  }

  // rho at the critical activity; +infinity when the series diverges there.
  double rho_c() const {
    if (!rho_c_cached_) {
      rho_c_ = std::isfinite(z_c_) ? weighted_sum(0.0, z_c_)
                                   : std::numeric_limits<double>::infinity();
      rho_c_cached_ = true;
    }
    return rho_c_;
  }

  // The activity z_0(rho): unique root of rho(z) = rho below the threshold,
  // frozen at z_c at and above it.  Bisection bracket plus guarded Newton.
  double solve_activity(double density, double rel_tol = 1e-12) const {
    if (!(density >= 0.0))
      throw std::invalid_argument("solve_activity: density must be >= 0");
    if (density == 0.0) return 0.0;
    const double rc = rho_c();
    if (density >= rc) return z_c_;
    double lo = 0.0;
    double hi;
    if (std::isfinite(z_c_)) {
      hi = z_c_;
    } else {
      hi = 1.0;
      while (weighted_sum(0.0, hi) < density) hi *= 2.0;
    }
    double z = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      double f = weighted_sum(0.0, z) - density;
      if (std::abs(f) <= rel_tol * density) return z;
      if (f > 0.0)
        hi = z;
      else
        lo = z;
      double step = f / weighted_sum(1.0, z) * z;  // Newton on rho(z)
      double zn = z - step;
      z = (zn > lo && zn < hi) ? zn : 0.5 * (lo + hi);
    }
    return z;
  }

  // max(0, 1 - rho_c / rho); 0 whenever the threshold is infinite.
  double condensate_fraction(double density) const {
    if (!(density >= 0.0))
      throw std::invalid_argument("condensate_fraction: density must be >= 0");
    if (density == 0.0) return 0.0;
    const double rc = rho_c();
    if (!std::isfinite(rc)) return 0.0;
    return std::max(0.0, 1.0 - rc / density);
  }

  // Limits of j R_j / n (size_mass, j <= j_max) and of the mass fraction at
  // sites of occupation k (occupation_mass, k <= k_max).  The latter
  // integrates k h_k u^k / sum_n h_n u^n over the trap with the denominator
  // evaluated through the generating identity sum_n h_n u^n = e^{sum theta_j u^j / j}.
  TypicalLimits typical_limits(double density, std::uint64_t j_max,
                               std::uint64_t k_max,
                               double quad_tol = 1e-10) const {
    if (!(density > 0.0))
      throw std::invalid_argument("typical_limits: density must be > 0");
    TypicalLimits out;
    out.z0 = solve_activity(density);
    out.condensate_fraction = condensate_fraction(density);
    out.size_mass.resize(j_max);
    for (std::uint64_t j = 1; j <= j_max; ++j)
      out.size_mass[j - 1] = theta_or_zero(j) *
                             std::pow(out.z0, static_cast<double>(j)) *
                             component_integral(j) / density;
    out.occupation_mass.resize(k_max);
    HTable h(padded_prefix(k_max));
    for (std::uint64_t k = 1; k <= k_max; ++k) {
      const double kk = static_cast<double>(k);
      const double log_pref = h.log_h(k) + kk * std::log(out.z0);
      double val;
      if (pot_.is_square()) {
        val = std::exp(log_pref - w_.levy_mass(out.z0));
      } else {
        auto f = [&](double r) {
          double v = pot_.radial(r);
          if (!std::isfinite(v)) return 0.0;
          double u = out.z0 * std::exp(-v);
          double lm = u > 0.0 ? w_.levy_mass(u) : 0.0;
          return std::pow(r, static_cast<double>(d_ - 1)) *
                 std::exp(log_pref - kk * v - lm);
        };
        val = Potential::surface_area(d_) *
              integrate_to_inf(f, 0.0, quad_tol).value;
      }
      out.occupation_mass[k - 1] = kk * val / density;
    }
    return out;
  }

  // Limits of R_j / n, the per-size component counts; the entropy functional
  // below is minimized exactly at this vector.
  std::vector<double> component_count_limits(double density,
                                             std::uint64_t j_max) const {
    if (!(density > 0.0))
      throw std::invalid_argument("component_count_limits: density must be > 0");
    const double z0 = solve_activity(density);
    std::vector<double> a(j_max);
    for (std::uint64_t j = 1; j <= j_max; ++j)
      a[j - 1] = theta_or_zero(j) * std::pow(z0, static_cast<double>(j)) *
                 component_integral(j) / (static_cast<double>(j) * density);
    return a;
  }

  // (1/rho) sum_j (theta_j / j) z_0^j I_j - log z_0; +infinity at rho = 0,
  // where the activity term dominates.
  double free_energy_limit(double density) const {
    if (!(density >= 0.0))
      throw std::invalid_argument("free_energy_limit: density must be >= 0");
    if (density == 0.0) return std::numeric_limits<double>::infinity();
    const double z0 = solve_activity(density);
    if (z0 == 0.0) return std::numeric_limits<double>::infinity();
    return weighted_sum(-1.0, z0) / density - std::log(z0);
  }

  // I(a) = sum_j a_j log( j a_j rho / (e theta_j I_j) ) for a_j >= 0 with
  // zero entries contributing zero; -I at the component-count limits equals
  // the free-energy limit.
  double entropy_functional(const std::vector<double>& a,
                            double density) const {
    if (!(density > 0.0))
      throw std::invalid_argument("entropy_functional: density must be > 0");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!(a[i] >= 0.0))
        throw std::invalid_argument("entropy_functional: entries must be >= 0");
      if (a[i] == 0.0) continue;
      const std::uint64_t j = i + 1;
      acc += a[i] * (std::log(static_cast<double>(j) * a[i] * density) - 1.0 -
                     w_.log_theta(j) - std::log(component_integral(j)));
    }
    return acc;
  }

  // sigma_c^2 = sum_j j theta_j I_j with an infinity flag when it diverges.
  SigmaCResult sigma_c_squared(TailCertificate* cert = nullptr) const {
    SigmaCResult out;
    if (w_.kind() != WeightKind::kCustom &&
        pot_.kind() != PotentialKind::kCustomRadial &&
        !w_.power_sum_finite(1.0 - p_)) {
      if (cert) *cert = {0, std::numeric_limits<double>::infinity(), false};
      return out;
    }
    const double v = weighted_sum(1.0, 1.0, cert);
    out.value = v;
    out.finite = std::isfinite(v);
    return out;
  }

  // rho(z) through explicit partial sums of the occupation-number ratio,
  // independent of the series route.  n_terms bounds the h table; the grid
  // tests keep z strictly inside (0, z_c) so the truncation is geometric.
  double rho_occupation_route(double z, std::uint64_t n_terms = 2048,
                              double quad_tol = 1e-9) const {
    check_activity(z);
    if (z == 0.0) return 0.0;
    ensure_htable(n_terms);
    if (pot_.is_square()) return occupation_ratio(z);
    auto f = [&](double r) {
      double v = pot_.radial(r);
      if (!std::isfinite(v)) return 0.0;
      return std::pow(r, static_cast<double>(d_ - 1)) *
             occupation_ratio(z * std::exp(-v));
    };
    return Potential::surface_area(d_) *
           integrate_to_inf(f, 0.0, quad_tol).value;
  }

 private:
  void check_activity(double z) const {
    if (!(z >= 0.0))
      throw std::invalid_argument("activity must be >= 0");
    if (z > z_c_ * (1.0 + 1e-12))
      throw std::domain_error("activity beyond the critical point");
  }

  void init_critical_activity() {
    if (w_.kind() != WeightKind::kCustom) {
      // every analytic family has (1/j) log theta_j -> 0
      z_c_ = 1.0;
      z_c_exact_ = true;
      return;
    }
    // A finite table with a sustained positive tail is read as the
    // truncation of an infinite family; the geometric mean of the trailing
    // ratios estimates the radius.  Short or terminating tables are taken
    // literally as polynomials.
    const std::uint64_t J = w_.max_j();
    const std::uint64_t window = std::min<std::uint64_t>(8, J > 1 ? J - 1 : 0);
    bool tail_positive = window >= 3;
    for (std::uint64_t j = J - window; tail_positive && j <= J; ++j)
      tail_positive = w_.theta(j) > 0.0;
    if (!tail_positive) {
      z_c_ = std::numeric_limits<double>::infinity();
      z_c_exact_ = true;
      return;
    }
    double log_ratio = 0.0;
    for (std::uint64_t j = J - window; j < J; ++j)
      log_ratio += std::log(w_.theta(j + 1) / w_.theta(j));
    z_c_ = std::exp(-log_ratio / static_cast<double>(window));
    z_c_exact_ = false;
  }

  // sum_j theta_j j^q I_j z^j.
  double weighted_sum(double q, double z, TailCertificate* cert = nullptr) const {
    if (w_.kind() == WeightKind::kCustom) {
      double sum = 0.0;
      for (std::uint64_t j = 1; j <= w_.max_j(); ++j)
        sum += w_.theta(j) * std::pow(static_cast<double>(j), q) *
               component_integral(j) * std::pow(z, static_cast<double>(j));
      if (cert) *cert = {w_.max_j(), 0.0, true};
      return sum;
    }
    if (pot_.kind() != PotentialKind::kCustomRadial)
      return A_ * w_.theta_power_sum(q - p_, z, rel_eps_, cert);
    return custom_potential_sum(q, z, cert);
  }

  // Direct summation against quadrature integrals, with the dropped tail
  // estimated by the midpoint integral sum_{j>J} t_j ~ int_{J+1/2}^inf t(x) dx.
  double custom_potential_sum(double q, double z,
                              TailCertificate* cert) const {
    const std::uint64_t j_cap = 20000;
    double sum = 0.0;
    std::uint64_t j = 0;
    double last = std::numeric_limits<double>::infinity();
    bool decreasing = false;
    while (j < j_cap) {
      ++j;
      double term = w_.theta(j) * std::pow(static_cast<double>(j), q) *
                    component_integral(j) * std::pow(z, static_cast<double>(j));
      sum += term;
      decreasing = term < last;
      last = term;
      if (decreasing && j >= 64 && term <= 1e-14 * sum) break;
    }
    auto t = [&](double x) {
      return theta_continuous(w_, x) * std::pow(x, q) *
             pot_.continuum_integral(x, d_, 1e-10) *
             std::pow(z, x);
    };
    double tail = decreasing
                      ? integrate_to_inf(t, static_cast<double>(j) + 0.5, 1e-8).value
                      : std::numeric_limits<double>::infinity();
    if (cert) *cert = {j, tail, false};
    if (!std::isfinite(tail) || tail > 0.1 * sum)
      return std::numeric_limits<double>::infinity();
    return sum + tail;
  }

  // Finite tables are zero-padded: theta_j = 0 beyond the last entry keeps
  // the h recurrence defined at every n.
  std::vector<double> padded_prefix(std::uint64_t n) const {
    std::vector<double> th = w_.prefix(std::min(n, w_.max_j()));
    th.resize(n, 0.0);
    return th;
  }

  double theta_or_zero(std::uint64_t j) const {
    return j > w_.max_j() ? 0.0 : w_.theta(j);
  }

  void ensure_htable(std::uint64_t n_terms) const {
    if (!ht_ || ht_->size() < n_terms)
      ht_ = std::make_shared<HTable>(padded_prefix(n_terms));
  }

  // ( sum_{n>=1} n h_n u^n ) / ( sum_{n>=0} h_n u^n ) by partial sums.
  double occupation_ratio(double u) const {
    if (!(u > 0.0)) return 0.0;
    const std::size_t N = ht_->size();
    const bool linear = ht_->linear_limit() == N;
    const double log_u = std::log(u);
    double num = 0.0, den = 1.0;  // n = 0 term of the denominator
    double u_pow = 1.0;
    for (std::size_t n = 1; n <= N; ++n) {
      double w;
      if (linear) {
        u_pow *= u;
        w = ht_->h(n) * u_pow;
      } else {
        w = std::exp(ht_->log_h(n) + static_cast<double>(n) * log_u);
      }
      num += static_cast<double>(n) * w;
      den += w;
      if (n >= 64 && static_cast<double>(n) * w <= 1e-18 * num) break;
    }
    return num / den;
  }

  WeightSequence w_;
  Potential pot_;
  int d_;
  double rel_eps_;
  double p_ = 0.0;  // component integrals decay as A j^{-p}
  double A_ = 1.0;
  double z_c_ = 1.0;
  bool z_c_exact_ = true;
  mutable double rho_c_ = 0.0;
  mutable bool rho_c_cached_ = false;
  mutable std::vector<double> icache_;
  mutable std::shared_ptr<HTable> ht_;
};

// (1/L^d) sum_{x != 0} sum_j theta_j e^{-j V(x/L)}, the finite-volume
// critical density.  Site-major order turns the double sum into one pass of
// G(u) = sum_j theta_j u^j per site, closed-form for constant weights.  The
// d = 1 tail is certified by integral comparison; higher dimensions stop
// once three consecutive shells fall below the relative target.
inline double lattice_critical_density(const WeightSequence& w,
                                       const LatticeWeights& lat,
                                       double rel_tol = 1e-12) {
  if (lat.square()) {
    double g1 = w.theta_power_sum(0.0, 1.0);
    return g1 * (lat.volume() - 1.0) / lat.volume();
  }
  const Potential& pot = lat.potential();
  const double L = lat.L();
  auto G = [&](double u) -> double {
    if (!(u > 0.0)) return 0.0;
    if (w.kind() == WeightKind::kConstant) return w.param() * u / (1.0 - u);
    return w.theta_power_sum(0.0, u, 1e-14);
  };
  const int d = lat.dim();
  double acc = 0.0;
  if (d == 1) {
    for (std::int64_t x = 1;; ++x) {
      const double u = std::exp(-pot.radial(static_cast<double>(x) / L));
      const double term = 2.0 * G(u);
      acc += term;
      if (u < 0.9 && (x & 127) == 0) {
        // sum_{y>x} u(y) <= int_x^inf e^{-V(t/L)} dt and G(u)/u is
        // nondecreasing, so the dropped sites are bounded through u(x)
        auto f = [&](double s) { return std::exp(-pot.radial(s)); };
        double site_tail =
            L * integrate_to_inf(f, static_cast<double>(x) / L, 1e-6).value;
        if (2.0 * (G(u) / u) * site_tail <= rel_tol * acc) break;
      }
      if (x > (std::int64_t{1} << 40))
        throw std::runtime_error("lattice_critical_density: no convergence");
    }
    return acc / lat.volume();
  }
  int quiet = 0;
  for (std::int64_t R = 1; quiet < 3; ++R) {
    double shell = 0.0;
    auto visit = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
      double r2 = static_cast<double>(x * x + y * y + z * z);
      shell += G(std::exp(-pot.radial(std::sqrt(r2) / L)));
    };
    if (d == 2) {
      for (std::int64_t x = -R; x <= R; ++x)
        for (std::int64_t y = -R; y <= R; ++y)
          if (std::max(std::llabs(x), std::llabs(y)) == R) visit(x, y, 0);
    } else {
      for (std::int64_t x = -R; x <= R; ++x)
        for (std::int64_t y = -R; y <= R; ++y)
          for (std::int64_t z = -R; z <= R; ++z)
            if (std::max({std::llabs(x), std::llabs(y), std::llabs(z)}) == R)
              visit(x, y, z);
    }
    acc += shell;
    quiet = shell <= rel_tol * acc ? quiet + 1 : 0;
    if (R > 1000000)
      throw std::runtime_error("lattice_critical_density: no convergence");
  }
  return acc / lat.volume();
}

}  // namespace partitia
