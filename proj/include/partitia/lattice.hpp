#pragma once

// Lattice-side weights: for sites x in Z^d and component size j, the weight
// e^{-j V(x/L)}, its certified sum c_j(L) over all sites, and samplers for
// the placement law p_{x,j} = e^{-j V(x/L)} / c_j(L).
//
// The box potential is exact (c_j = L^d, integer L required).  Radial
// potentials are summed over a truncation window with an explicit tail
// bound: monotone integral comparison on an axis in d = 1, separable
// products of axis sums for quadratic wells in any d, and squared-radius
// shell decomposition with an l-infinity comparison series for other radial
// shapes in d = 2, 3.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "partitia/potential.hpp"
#include "partitia/quadrature.hpp"
#include "partitia/rng.hpp"
#include "partitia/special.hpp"
#include "partitia/weights.hpp"

namespace partitia {

struct Site {
  std::array<std::int64_t, 3> c{0, 0, 0};

  bool operator==(const Site& o) const { return c == o.c; }
  bool operator<(const Site& o) const { return c < o.c; }
  bool is_origin() const { return c[0] == 0 && c[1] == 0 && c[2] == 0; }
};

inline Site make_site(std::int64_t x, std::int64_t y = 0, std::int64_t z = 0) {
  Site s;
  s.c = {x, y, z};
  return s;
}

class LatticeWeights {
 public:
  LatticeWeights(Potential pot, int d, double L, double eps_trunc = 1e-12)
      : pot_(std::move(pot)), d_(d), L_(L), eps_(eps_trunc) {
    if (d < 1 || d > 3) throw std::invalid_argument("lattice: d must be 1..3");
    if (!(L > 0.0)) throw std::invalid_argument("lattice: L must be > 0");
    if (!(eps_trunc > 0.0 && eps_trunc < 1e-3))
      throw std::invalid_argument("lattice: eps_trunc out of range");
    if (pot_.is_square()) {
      L_int_ = static_cast<std::int64_t>(std::llround(L));
      if (std::abs(L - static_cast<double>(L_int_)) > 1e-9 || L_int_ < 1)
        throw std::invalid_argument("square potential needs integer L >= 1");
    }
    separable_ = pot_.kind() == PotentialKind::kPower && pot_.delta() == 2.0;
  }

  const Potential& potential() const { return pot_; }
  int dim() const { return d_; }
  double L() const { return L_; }
  double eps() const { return eps_; }
  bool square() const { return pot_.is_square(); }

  double volume() const { return std::pow(L_, d_); }

  // e^{-j V(x/L)}.
  double site_weight(double j, const Site& x) const {
    if (square()) return in_box(x) ? 1.0 : 0.0;
    double r2 = 0.0;
    for (int i = 0; i < d_; ++i) {
      double xi = static_cast<double>(x.c[i]) / L_;
      r2 += xi * xi;
    }
    return std::exp(-j * pot_.radial(std::sqrt(r2)));
  }

  // c_j(L) = sum_x e^{-j V(x/L)}, truncated with tail bound <= eps * value.
  double c(std::uint64_t j) const {
    if (square()) return volume();
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = c_cache_.find(j);
      if (it != c_cache_.end()) return it->second.value;
    }
    CEntry e = compute_c(j);
    std::lock_guard<std::mutex> lock(mu_);
    c_cache_[j] = e;
    return e.value;
  }

  TailCertificate c_certificate(std::uint64_t j) const {
    if (square()) return {static_cast<std::uint64_t>(volume()), 0.0, true};
    c(j);
    std::lock_guard<std::mutex> lock(mu_);
    return c_cache_.at(j).cert;
  }

  std::vector<double> c_array(std::uint64_t n) const {
    std::vector<double> out(n);
    for (std::uint64_t j = 1; j <= n; ++j) out[j - 1] = c(j);
    return out;
  }

  // Continuum counterpart int e^{-j V} dx; the window sums converge to
  // L^d times this as L grows.
  double continuum(double j, double rel_tol = 1e-8) const {
    return pot_.continuum_integral(j, d_, rel_tol);
  }

  double riemann_gap(std::uint64_t j) const {
    return std::abs(c(j) / volume() - continuum(static_cast<double>(j)));
  }

  Site sample_site(std::uint64_t j, Rng& rng) const {
    if (square()) {
      Site s;
      for (int i = 0; i < d_; ++i) {
        std::int64_t lo = box_lo();
        std::int64_t off =
            static_cast<std::int64_t>(rng.uniform() * static_cast<double>(L_int_));
        if (off >= L_int_) off = L_int_ - 1;
        s.c[i] = lo + off;
      }
      return s;
    }
    if (d_ == 1 || separable_) {
      auto axis = axis_table(j);
      Site s;
      for (int i = 0; i < d_; ++i) {
        std::size_t idx = axis->cum.sample(rng);
        s.c[i] = static_cast<std::int64_t>(idx) - axis->R;
      }
      return s;
    }
    auto sh = shell_sampler(j);
    std::size_t shell_idx = sh->cum.sample(rng);
    const auto& pts = shell_points(sh->s_values[shell_idx]);
    std::size_t k = static_cast<std::size_t>(rng.uniform() * pts.size());
    if (k >= pts.size()) k = pts.size() - 1;
    return pts[k];
  }

  double log_site_prob(std::uint64_t j, const Site& x) const {
    double w = site_weight(static_cast<double>(j), x);
    if (w <= 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(w) - std::log(c(j));
  }

  // Sites with e^{-V(x/L)} >= eps_window, ordered lexicographically.  This is
  // the finite arena used by dynamics and exact enumeration.
  std::vector<Site> window_sites(double eps_window) const {
    std::vector<Site> out;
    if (square()) {
      std::int64_t lo = box_lo(), hi = box_lo() + L_int_ - 1;
      iterate_box(lo, hi, [&](const Site& s) { out.push_back(s); });
      return out;
    }
    // solve e^{-V(r/L)} = eps on the axis; V nondecreasing
    double target = std::log(1.0 / eps_window);
    std::int64_t R = 1;
    while (pot_.radial(static_cast<double>(R) / L_) < target) {
      ++R;
      if (R > 100000000)
        throw std::runtime_error("window_sites: window too large");
    }
    double cap = 2e7;
    if (std::pow(2.0 * static_cast<double>(R) + 1.0, d_) > cap)
      throw std::runtime_error("window_sites: window too large");
    iterate_box(-R, R, [&](const Site& s) {
      if (site_weight(1.0, s) >= eps_window) out.push_back(s);
    });
    return out;
  }

 private:
  struct CEntry {
    double value = 0.0;
    TailCertificate cert;
  };

  struct AxisTable {
    std::int64_t R = 0;
    double total = 0.0;
    CumulativeTable cum;
  };

  struct ShellSampler {
    std::vector<std::uint64_t> s_values;  // squared radii with points
    CumulativeTable cum;
  };

  bool in_box(const Site& x) const {
    for (int i = 0; i < d_; ++i) {
      if (x.c[i] < box_lo() || x.c[i] > box_lo() + L_int_ - 1) return false;
    }
    return true;
  }

  std::int64_t box_lo() const {
    // integer sites with x/L in (-1/2, 1/2]
    return -(L_int_ / 2) + (L_int_ % 2 == 0 ? 1 : 0);
  }

  template <class F>
  void iterate_box(std::int64_t lo, std::int64_t hi, F&& f) const {
    Site s;
    for (std::int64_t x = lo; x <= hi; ++x) {
      s.c[0] = x;
      if (d_ == 1) {
        f(s);
        continue;
      }
      for (std::int64_t y = lo; y <= hi; ++y) {
        s.c[1] = y;
        if (d_ == 2) {
          f(s);
          continue;
        }
        for (std::int64_t z = lo; z <= hi; ++z) {
          s.c[2] = z;
          f(s);
        }
      }
    }
  }

  // One axis: w(x) = e^{-j V(|x|/L)} for x = -R..R with certified tail.
  // For separable quadratic wells the d-dimensional weight factorizes over
  // axes, so this single table also drives d >= 2.
  std::shared_ptr<const AxisTable> axis_table(std::uint64_t j) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = axis_cache_.find(j);
    if (it != axis_cache_.end()) return it->second;

    const double jj = static_cast<double>(j);
    const bool cheap_bound = pot_.kind() == PotentialKind::kPower;
    std::vector<double> right;  // weights at x = 1, 2, ...
    double partial = 1.0;       // x = 0
    std::int64_t x = 0;
    for (;;) {
      ++x;
      double w = std::exp(-jj * pot_.radial(static_cast<double>(x) / L_));
      right.push_back(w);
      partial += 2.0 * w;
      if (x >= 8) {
        // quadrature bounds are costly; only probe once the last term is small
        bool probe = cheap_bound || ((x & 63) == 0 && w <= eps_ * partial);
        if (probe && axis_tail_bound(jj, x) <= 0.5 * eps_ * partial) break;
      }
      if (x > 100000000) throw std::runtime_error("axis window too large");
    }
    auto tab = std::make_shared<AxisTable>();
    tab->R = x;
    std::vector<double> w(2 * x + 1);
    for (std::int64_t i = -x; i <= x; ++i)
      w[static_cast<std::size_t>(i + x)] = i == 0 ? 1.0 : right[std::abs(i) - 1];
    tab->total = partial;
    tab->cum = CumulativeTable(w);
    axis_cache_[j] = tab;
    return tab;
  }

  // Upper bound on 2 sum_{x > R} e^{-j V(x/L)} for nondecreasing V: the
  // integral dominates the sum term by term.
  double axis_tail_bound(double j, std::int64_t R) const {
    if (pot_.kind() == PotentialKind::kPower) {
      // 2 int_R^inf e^{-j c (x/L)^delta} dx = (2L/delta) (jc)^{-1/delta}
      //   Gamma(1/delta, j c (R/L)^delta)
      const double delta = pot_.delta(), cc = pot_.strength();
      double a = 1.0 / delta;
      double z = j * cc * std::pow(static_cast<double>(R) / L_, delta);
      if (z > 700.0) return 0.0;
      return 2.0 * L_ / delta * std::pow(j * cc, -a) *
             std::exp(std::lgamma(a)) * gamma_q(a, z);
    }
    // custom radial: numeric integral of the dominating function
    auto f = [&](double x) {
      double v = pot_.radial(x / L_);
      return std::isfinite(v) ? std::exp(-j * v) : 0.0;
    };
    auto res = integrate_to_inf(f, static_cast<double>(R), 1e-6);
    return 2.0 * res.value;
  }

  CEntry compute_c(std::uint64_t j) const {
    CEntry e;
    if (d_ == 1 || separable_) {
      auto axis = axis_table(j);
      double a = axis->total;
      double bound = axis_tail_bound(static_cast<double>(j), axis->R);
      // product over axes: (a + t)^d - a^d <= d (a + t)^{d-1} t
      e.value = std::pow(a, d_);
      e.cert.tail_bound = d_ * std::pow(a + bound, d_ - 1) * bound;
      e.cert.terms_used = static_cast<std::uint64_t>(axis->R);
      return e;
    }
    auto sh = shell_sampler(j);
    e.value = sh->cum.total();
    std::lock_guard<std::mutex> lock(mu_);
    e.cert = shell_certs_.at(j);
    return e;
  }

  // Shell decomposition for non-separable radial potentials in d = 2, 3:
  // group sites by squared radius s, weight count(s) e^{-j V(sqrt(s)/L)}.
  std::shared_ptr<const ShellSampler> shell_sampler(std::uint64_t j) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = shell_cache_.find(j);
    if (it != shell_cache_.end()) return it->second;

    const double jj = static_cast<double>(j);
    // outer radius: l-infinity shells k > R contribute at most
    // ((2k+1)^d - (2k-1)^d) e^{-j V(k/L)} each, since |x|_2 >= |x|_inf
    double target = std::log(1.0 / (0.25 * eps_)) / jj;
    std::int64_t R = 1;
    while (pot_.radial(static_cast<double>(R) / L_) < target) {
      ++R;
      if ((d_ == 2 && R > 20000) || (d_ == 3 && R > 600))
        throw std::runtime_error(
            "shell window too large for exact enumeration; use a separable "
            "potential or d = 1 at this scale");
    }
    ensure_shell_counts(R);
    double tail = 0.0;
    for (std::int64_t k = R + 1;; ++k) {
      double cnt = std::pow(2.0 * k + 1.0, d_) - std::pow(2.0 * k - 1.0, d_);
      double t = cnt * std::exp(-jj * pot_.radial(static_cast<double>(k) / L_));
      tail += t;
      if (t < 1e-18 * (1.0 + tail)) break;
      if (k > R + 1000000) break;
    }
    auto sampler = std::make_shared<ShellSampler>();
    std::vector<double> wts;
    double total = 0.0;
    const std::uint64_t smax = static_cast<std::uint64_t>(R) *
                               static_cast<std::uint64_t>(R);
    for (std::uint64_t s = 0; s <= smax; ++s) {
      if (s >= shell_count_.size() || shell_count_[s] == 0) continue;
      double w = static_cast<double>(shell_count_[s]) *
                 std::exp(-jj * pot_.radial(std::sqrt(static_cast<double>(s)) / L_));
      if (w <= 0.0) continue;
      sampler->s_values.push_back(s);
      wts.push_back(w);
      total += w;
    }
    sampler->cum = CumulativeTable(wts);
    shell_certs_[j] = {static_cast<std::uint64_t>(R), tail, false};
    shell_cache_[j] = sampler;
    return sampler;
  }

  void ensure_shell_counts(std::int64_t R) const {
    const std::uint64_t smax =
        static_cast<std::uint64_t>(R) * static_cast<std::uint64_t>(R);
    if (shell_count_.size() > smax && shell_R_ >= R) return;
    shell_count_.assign(smax + 1, 0);
    // count only points with |x|_2 <= R (beyond-R mass is in the tail bound)
    iterate_box(-R, R, [&](const Site& s) {
      std::uint64_t r2 = 0;
      for (int i = 0; i < d_; ++i)
        r2 += static_cast<std::uint64_t>(s.c[i] * s.c[i]);
      if (r2 <= smax) ++shell_count_[r2];
    });
    shell_R_ = R;
  }

  const std::vector<Site>& shell_points(std::uint64_t s) const {
    std::lock_guard<std::mutex> lock(points_mu_);
    auto it = shell_points_.find(s);
    if (it != shell_points_.end()) return it->second;
    std::vector<Site> pts;
    std::int64_t R = static_cast<std::int64_t>(std::sqrt(static_cast<double>(s))) + 1;
    iterate_box(-R, R, [&](const Site& x) {
      std::uint64_t r2 = 0;
      for (int i = 0; i < d_; ++i)
        r2 += static_cast<std::uint64_t>(x.c[i] * x.c[i]);
      if (r2 == s) pts.push_back(x);
    });
    return shell_points_.emplace(s, std::move(pts)).first->second;
  }

  Potential pot_;
  int d_;
  double L_;
  double eps_;
  std::int64_t L_int_ = 0;
  bool separable_ = false;

  mutable std::mutex mu_;
  mutable std::mutex points_mu_;
  mutable std::map<std::uint64_t, CEntry> c_cache_;
  mutable std::map<std::uint64_t, std::shared_ptr<const AxisTable>> axis_cache_;
  mutable std::map<std::uint64_t, std::shared_ptr<const ShellSampler>> shell_cache_;
  mutable std::map<std::uint64_t, TailCertificate> shell_certs_;
  mutable std::vector<std::uint64_t> shell_count_;
  mutable std::int64_t shell_R_ = 0;
  mutable std::map<std::uint64_t, std::vector<Site>> shell_points_;
};

}  // namespace partitia
