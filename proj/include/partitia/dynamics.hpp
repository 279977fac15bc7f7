#pragma once

// Continuous-time Markov kernels that preserve the fixed-mass lattice
// measure: the table-move chain (constant weights), the instant-reshuffle
// variant (general weights), spatial coagulation-fragmentation, and the
// zero-range process the site masses project onto.  All kernels run over a
// finite site window with a row-stochastic jump kernel t(x, y); for trap
// potentials the window is a level set of e^{-V} and t is renormalized on
// it, which keeps the restricted measure exactly stationary.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "partitia/canonical.hpp"
#include "partitia/gibbs.hpp"
#include "partitia/htable.hpp"
#include "partitia/lattice.hpp"
#include "partitia/rng.hpp"
#include "partitia/spatial.hpp"
#include "partitia/text.hpp"
#include "partitia/weights.hpp"

namespace partitia {

namespace detail {

// prefix-sum tree over per-site rates; point update O(log S), total O(1),
// inverse-cdf selection O(log S)
class FenwickTree {
 public:
  explicit FenwickTree(std::size_t n) : raw_(n, 0.0), tree_(n + 1, 0.0) {}

  std::size_t size() const { return raw_.size(); }
  double get(std::size_t i) const { return raw_[i]; }
  double total() const { return total_; }

  void set(std::size_t i, double v) {
    double delta = v - raw_[i];
    raw_[i] = v;
    total_ += delta;
    for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1))
      tree_[k] += delta;
  }

  // smallest i with prefix(i) > u; caller guarantees 0 <= u < total
  std::size_t sample(double u) const {
    std::size_t pos = 0;
    std::size_t mask = 1;
    while ((mask << 1) < tree_.size()) mask <<= 1;
    for (; mask > 0; mask >>= 1) {
      std::size_t next = pos + mask;
      if (next < tree_.size() && tree_[next] <= u) {
        u -= tree_[next];
        pos = next;
      }
    }
    return pos < raw_.size() ? pos : raw_.size() - 1;
  }

  void rebuild() {
    std::fill(tree_.begin(), tree_.end(), 0.0);
    total_ = 0.0;
    std::vector<double> raw(raw_);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      raw_[i] = 0.0;
    }
    for (std::size_t i = 0; i < raw.size(); ++i) set(i, raw[i]);
  }

 private:
  std::vector<double> raw_;
  std::vector<double> tree_;
  double total_ = 0.0;
};

}  // namespace detail

// Row-stochastic destination law over a fixed window.  The default profile
// t(x, y) = e^{-V(y/L)} / sum_z e^{-V(z/L)} does not depend on x, jumps to
// self included, and satisfies e^{-V(x)} t(x,y) = e^{-V(y)} t(y,x) exactly.
class JumpKernel {
 public:
  static JumpKernel equilibrium(const LatticeWeights& lat,
                                std::vector<Site> window) {
    JumpKernel k;
    k.window_ = std::move(window);
    if (k.window_.empty()) throw std::invalid_argument("empty jump window");
    k.build_index();
    std::vector<double> w(k.window_.size());
    for (std::size_t i = 0; i < k.window_.size(); ++i)
      w[i] = lat.site_weight(1.0, k.window_[i]);
    k.shared_row_ = w;
    double tot = 0.0;
    for (double v : w) tot += v;
    for (double& v : k.shared_row_) v /= tot;
    k.shared_cum_ = CumulativeTable(w);
    return k;
  }

  // explicit rows, one per source site; rows must be stochastic
  static JumpKernel from_rows(std::vector<Site> window,
                              std::vector<std::vector<double>> rows) {
    JumpKernel k;
    k.window_ = std::move(window);
    if (k.window_.size() != rows.size())
      throw std::invalid_argument("jump rows/window mismatch");
    k.build_index();
    for (const auto& row : rows) {
      if (row.size() != k.window_.size())
        throw std::invalid_argument("jump row width mismatch");
      double tot = 0.0;
      for (double v : row) {
        if (v < 0.0) throw std::invalid_argument("negative jump weight");
        tot += v;
      }
      if (std::abs(tot - 1.0) > 1e-9)
        throw std::invalid_argument("jump row does not sum to 1");
      k.row_cums_.emplace_back(row);
    }
    k.rows_ = std::move(rows);
    return k;
  }

  const std::vector<Site>& window() const { return window_; }
  std::size_t size() const { return window_.size(); }

  std::size_t index_of(const Site& x) const {
    auto it = index_.find(x);
    if (it == index_.end()) throw std::out_of_range("site outside window");
    return it->second;
  }

  double t(std::size_t xi, std::size_t yi) const {
    return rows_.empty() ? shared_row_[yi] : rows_[xi][yi];
  }

  std::size_t sample_dest(std::size_t xi, Rng& rng) const {
    return rows_.empty() ? shared_cum_.sample(rng) : row_cums_[xi].sample(rng);
  }

  // max over pairs of |e^{-Vx} t(x,y) - e^{-Vy} t(y,x)| / scale
  double reversibility_violation(const LatticeWeights& lat) const {
    double worst = 0.0;
    for (std::size_t x = 0; x < size(); ++x) {
      for (std::size_t y = 0; y < size(); ++y) {
        double a = lat.site_weight(1.0, window_[x]) * t(x, y);
        double b = lat.site_weight(1.0, window_[y]) * t(y, x);
        double scale = std::max({std::abs(a), std::abs(b), 1e-300});
        worst = std::max(worst, std::abs(a - b) / scale);
      }
    }
    return worst;
  }

 private:
  void build_index() {
    for (std::size_t i = 0; i < window_.size(); ++i) index_[window_[i]] = i;
    if (index_.size() != window_.size())
      throw std::invalid_argument("duplicate sites in window");
  }

  std::vector<Site> window_;
  std::map<Site, std::size_t> index_;
  std::vector<double> shared_row_;
  CumulativeTable shared_cum_;
  std::vector<std::vector<double>> rows_;
  std::vector<CumulativeTable> row_cums_;
};

class TransitionKernel {
 public:
  virtual ~TransitionKernel() = default;

  virtual const JumpKernel& jumps() const = 0;
  const std::vector<Site>& window() const { return jumps().window(); }

  // total event rate attached to site index xi in this state
  virtual double site_rate(const SpatialPartitionState& s,
                           std::size_t xi) const = 0;

  // perform one event rooted at site xi (chosen with probability
  // proportional to site_rate); returns the indices whose rates changed
  virtual std::pair<std::size_t, std::size_t> apply_event_at(
      SpatialPartitionState& s, std::size_t xi, Rng& rng) const = 0;

  // exhaustive rate enumeration for small state spaces, merged by target
  virtual std::map<SpatialPartitionState, double> transitions(
      const SpatialPartitionState& s) const = 0;

  // log of the unnormalized stationary weight this kernel preserves
  virtual double log_stationary_weight(const SpatialPartitionState& s) const = 0;

  double total_rate(const SpatialPartitionState& s) const {
    double tot = 0.0;
    for (std::size_t i = 0; i < window().size(); ++i) tot += site_rate(s, i);
    return tot;
  }

 protected:
  static void require_reversible(const JumpKernel& jumps,
                                 const LatticeWeights& lat) {
    if (jumps.reversibility_violation(lat) > 1e-12)
      throw std::invalid_argument(
          "jump kernel is not reversible for this potential");
  }
};

// Single-element moves with constant weights theta_j = theta: a site fires
// at rate g(eta_x) = eta_x / (theta + eta_x - 1); the element leaves a
// size-j component with probability j r_{xj} / eta_x, walks to y ~ t(x, .),
// and joins a size-k component there with probability k r_{yk} / (eta_y +
// theta), or founds a singleton with probability theta / (eta_y + theta).
// The join state is the post-departure one, which is what makes detailed
// balance exact when y = x.
class ElementMoveKernel : public TransitionKernel {
 public:
  ElementMoveKernel(double theta, std::shared_ptr<const LatticeWeights> lat,
                    JumpKernel jumps)
      : theta_(theta),
        lat_(std::move(lat)),
        jumps_(std::move(jumps)),
        w_(WeightSequence::constant(theta)) {
    if (!(theta > 0.0)) throw std::invalid_argument("theta must be > 0");
    require_reversible(jumps_, *lat_);
  }

  double theta() const { return theta_; }
  const JumpKernel& jumps() const override { return jumps_; }

  double g(std::uint64_t eta) const {
    if (eta == 0) return 0.0;
    double e = static_cast<double>(eta);
    return e / (theta_ + e - 1.0);
  }

  double site_rate(const SpatialPartitionState& s,
                   std::size_t xi) const override {
    return g(s.eta(window()[xi]));
  }

  std::pair<std::size_t, std::size_t> apply_event_at(SpatialPartitionState& s,
                                                     std::size_t xi,
                                                     Rng& rng) const override {
    const Site& x = window()[xi];
    const std::uint64_t before = s.total();
    std::uint64_t eta_x = s.eta(x);
    assert(eta_x > 0);

    // departure size: p_-(j) = j r_{xj} / eta_x
    std::uint64_t j = pick_size_biased(s, x, eta_x, rng);
    s.remove_part(x, j);
    if (j >= 2) s.add_part(x, j - 1);

    // destination and join, evaluated on the post-departure state
    std::size_t yi = jumps_.sample_dest(xi, rng);
    const Site& y = window()[yi];
    std::uint64_t eta_y = s.eta(y);
    double denom = static_cast<double>(eta_y) + theta_;
    double u = rng.uniform() * denom;
    if (u < theta_ || eta_y == 0) {
      s.add_part(y, 1);
    } else {
      std::uint64_t k = pick_size_biased(s, y, eta_y, rng);
      s.remove_part(y, k);
      s.add_part(y, k + 1);
    }
    assert(s.total() == before);
    (void)before;
    return {xi, yi};
  }

  std::map<SpatialPartitionState, double> transitions(
      const SpatialPartitionState& s) const override {
    std::map<SpatialPartitionState, double> out;
    for (std::size_t xi = 0; xi < window().size(); ++xi) {
      const Site& x = window()[xi];
      std::uint64_t eta_x = s.eta(x);
      if (eta_x == 0) continue;
      double gx = g(eta_x);
      auto parts_x = s.sites().at(x).counts();
      for (const auto& [j, rj] : parts_x) {
        double p_minus = static_cast<double>(j * rj) / static_cast<double>(eta_x);
        SpatialPartitionState mid = s;
        mid.remove_part(x, j);
        if (j >= 2) mid.add_part(x, j - 1);
        for (std::size_t yi = 0; yi < window().size(); ++yi) {
          const Site& y = window()[yi];
          double txy = jumps_.t(xi, yi);
          if (txy <= 0.0) continue;
          std::uint64_t eta_y = mid.eta(y);
          double denom = static_cast<double>(eta_y) + theta_;
          {
            SpatialPartitionState nxt = mid;
            nxt.add_part(y, 1);
            out[nxt] += gx * p_minus * txy * (theta_ / denom);
          }
          if (eta_y > 0) {
            auto parts_y = mid.sites().at(y).counts();
            for (const auto& [k, rk] : parts_y) {
              SpatialPartitionState nxt = mid;
              nxt.remove_part(y, k);
              nxt.add_part(y, k + 1);
              out[nxt] += gx * p_minus * txy *
                          (static_cast<double>(k * rk) / denom);
            }
          }
        }
      }
    }
    return out;
  }

  double log_stationary_weight(const SpatialPartitionState& s) const override {
    return log_state_weight(w_, *lat_, s);
  }

 private:
  static std::uint64_t pick_size_biased(const SpatialPartitionState& s,
                                        const Site& x, std::uint64_t eta,
                                        Rng& rng) {
    double u = rng.uniform() * static_cast<double>(eta);
    double acc = 0.0;
    std::uint64_t last = 1;
    for (const auto& [j, r] : s.sites().at(x).counts()) {
      acc += static_cast<double>(j * r);
      last = j;
      if (u < acc) return j;
    }
    return last;
  }

  double theta_;
  std::shared_ptr<const LatticeWeights> lat_;
  JumpKernel jumps_;
  WeightSequence w_;
};

// Instant-reshuffle moves for general weights: one mass unit hops x -> y at
// rate g(eta_x) t(x, y) with g(n) = h_{n-1} / h_n, and both touched sites
// redraw their partitions from the one-site law at their new masses.  When
// y = x the mass is unchanged and the site simply redraws.
class ReshuffleKernel : public TransitionKernel {
 public:
  ReshuffleKernel(WeightSequence w, std::shared_ptr<const LatticeWeights> lat,
                  JumpKernel jumps, std::uint64_t n_max)
      : w_(std::move(w)),
        lat_(std::move(lat)),
        jumps_(std::move(jumps)),
        h_(std::make_shared<HTable>(w_.prefix(n_max))),
        n_max_(n_max) {
    if (n_max == 0) throw std::invalid_argument("n_max must be >= 1");
    require_reversible(jumps_, *lat_);
  }

  const JumpKernel& jumps() const override { return jumps_; }
  const HTable& h() const { return *h_; }

  double g(std::uint64_t eta) const { return eta == 0 ? 0.0 : h_->g(eta); }

  double site_rate(const SpatialPartitionState& s,
                   std::size_t xi) const override {
    return g(s.eta(window()[xi]));
  }

  std::pair<std::size_t, std::size_t> apply_event_at(SpatialPartitionState& s,
                                                     std::size_t xi,
                                                     Rng& rng) const override {
    const Site& x = window()[xi];
    const std::uint64_t before = s.total();
    std::uint64_t eta_x = s.eta(x);
    assert(eta_x > 0);
    std::size_t yi = jumps_.sample_dest(xi, rng);
    const Site& y = window()[yi];
    GibbsMeasure nu(*h_);
    if (yi == xi) {
      s.set_site(x, nu.sample(eta_x, rng));
    } else {
      std::uint64_t eta_y = s.eta(y);
      s.set_site(x, nu.sample(eta_x - 1, rng));
      s.set_site(y, nu.sample(eta_y + 1, rng));
    }
    assert(s.total() == before);
    (void)before;
    return {xi, yi};
  }

  std::map<SpatialPartitionState, double> transitions(
      const SpatialPartitionState& s) const override {
    std::map<SpatialPartitionState, double> out;
    GibbsMeasure nu(*h_);
    for (std::size_t xi = 0; xi < window().size(); ++xi) {
      const Site& x = window()[xi];
      std::uint64_t eta_x = s.eta(x);
      if (eta_x == 0) continue;
      double gx = g(eta_x);
      for (std::size_t yi = 0; yi < window().size(); ++yi) {
        const Site& y = window()[yi];
        double txy = jumps_.t(xi, yi);
        if (txy <= 0.0) continue;
        if (yi == xi) {
          for (const auto& lam : partitions_of(eta_x)) {
            SpatialPartitionState nxt = s;
            nxt.set_site(x, lam);
            out[nxt] += gx * txy * nu.prob(lam);
          }
          continue;
        }
        std::uint64_t eta_y = s.eta(y);
        for (const auto& lam_x : partitions_of(eta_x - 1)) {
          double px = nu.prob(lam_x);
          for (const auto& lam_y : partitions_of(eta_y + 1)) {
            SpatialPartitionState nxt = s;
            nxt.set_site(x, lam_x);
            nxt.set_site(y, lam_y);
            out[nxt] += gx * txy * px * nu.prob(lam_y);
          }
        }
      }
    }
    return out;
  }

  double log_stationary_weight(const SpatialPartitionState& s) const override {
    return log_state_weight(w_, *lat_, s);
  }

 private:
  WeightSequence w_;
  std::shared_ptr<const LatticeWeights> lat_;
  JumpKernel jumps_;
  std::shared_ptr<const HTable> h_;
  std::uint64_t n_max_;
};

// Spatial coagulation-fragmentation: at each site, a size-j component
// absorbs a monomer at rate a_j r_{xj} r_{x1} (j >= 2), two monomers merge
// at rate a_1 r_{x1} (r_{x1} - 1), a size-j component sheds a monomer at
// rate b_j r_{xj} (j >= 2), and monomers hop x -> y at rate r_{x1} t(x, y).
// Stationarity of the fixed-mass measure needs the rate matching
//   a_j (theta_j / j) theta_1 = b_{j+1} theta_{j+1} / (j + 1).
class CoagFragKernel : public TransitionKernel {
 public:
  CoagFragKernel(WeightSequence w, std::shared_ptr<const LatticeWeights> lat,
                 JumpKernel jumps, std::vector<double> a, std::vector<double> b,
                 bool validate = true)
      : w_(std::move(w)),
        lat_(std::move(lat)),
        jumps_(std::move(jumps)),
        a_(std::move(a)),
        b_(std::move(b)) {
    if (w_.theta(1) <= 0.0)
      throw std::invalid_argument("coag-frag needs theta_1 > 0");
    if (b_.size() != a_.size() + 1)
      throw std::invalid_argument("need b_j for j = 2 .. max coagulation + 1");
    require_reversible(jumps_, *lat_);
    if (validate) {
      double worst = matching_violation();
      if (worst > 1e-12)
        throw std::invalid_argument(
            "coagulation/fragmentation rates do not match the weights");
    }
  }

  // b_{j+1} = a_j (theta_j / j) theta_1 (j + 1) / theta_{j+1}
  static std::vector<double> derive_b(const WeightSequence& w,
                                      const std::vector<double>& a) {
    std::vector<double> b(a.size() + 1, 0.0);  // b[0] unused (j = 1)
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::uint64_t j = i + 1;
      double tj1 = w.theta(j + 1);
      if (tj1 <= 0.0) {
        if (a[i] != 0.0)
          throw std::invalid_argument("a_j > 0 but theta_{j+1} = 0");
        b[i + 1] = 0.0;
        continue;
      }
      b[i + 1] = a[i] * (w.theta(j) / static_cast<double>(j)) * w.theta(1) *
                 static_cast<double>(j + 1) / tj1;
    }
    return b;
  }

  static std::vector<double> derive_a(const WeightSequence& w,
                                      const std::vector<double>& b) {
    std::vector<double> a(b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::uint64_t j = i + 1;
      double tj = w.theta(j);
      if (tj <= 0.0) {
        if (b[i + 1] != 0.0)
          throw std::invalid_argument("b_{j+1} > 0 but theta_j = 0");
        continue;
      }
      a[i] = b[i + 1] * (w.theta(j + 1) / static_cast<double>(j + 1)) /
             ((tj / static_cast<double>(j)) * w.theta(1));
    }
    return a;
  }

  double matching_violation() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i) {
      std::uint64_t j = i + 1;
      double lhs = a_[i] * (w_.theta(j) / static_cast<double>(j)) * w_.theta(1);
      double rhs = b_[i + 1] * w_.theta(j + 1) / static_cast<double>(j + 1);
      double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
      worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    return worst;
  }

  const JumpKernel& jumps() const override { return jumps_; }
  double a(std::uint64_t j) const { return j <= a_.size() ? a_[j - 1] : 0.0; }
  double b(std::uint64_t j) const {
    return (j >= 2 && j <= b_.size() + 1) ? b_[j - 1] : 0.0;
  }

  double site_rate(const SpatialPartitionState& s,
                   std::size_t xi) const override {
    const Site& x = window()[xi];
    auto it = s.sites().find(x);
    if (it == s.sites().end()) return 0.0;
    const auto& counts = it->second.counts();
    auto r1_it = counts.find(1);
    double r1 = r1_it == counts.end() ? 0.0 : static_cast<double>(r1_it->second);
    double rate = r1;  // monomer jump (rows are stochastic)
    if (r1 >= 2.0) rate += a(1) * r1 * (r1 - 1.0);
    for (const auto& [j, r] : counts) {
      if (j < 2) continue;
      double rr = static_cast<double>(r);
      rate += b(j) * rr;
      if (r1 > 0.0) rate += a(j) * rr * r1;
    }
    return rate;
  }

  std::pair<std::size_t, std::size_t> apply_event_at(SpatialPartitionState& s,
                                                     std::size_t xi,
                                                     Rng& rng) const override {
    const Site& x = window()[xi];
    const std::uint64_t before = s.total();
    const auto& counts = s.sites().at(x).counts();
    auto r1_it = counts.find(1);
    double r1 = r1_it == counts.end() ? 0.0 : static_cast<double>(r1_it->second);

    double u = rng.uniform() * site_rate(s, xi);
    // monomer jump
    if (u < r1) {
      std::size_t yi = jumps_.sample_dest(xi, rng);
      s.remove_part(x, 1);
      s.add_part(window()[yi], 1);
      assert(s.total() == before);
      (void)before;
      return {xi, yi};
    }
    u -= r1;
    // monomer-pair coagulation
    if (r1 >= 2.0) {
      double rr = a(1) * r1 * (r1 - 1.0);
      if (u < rr) {
        s.remove_part(x, 1, 2);
        s.add_part(x, 2);
        assert(s.total() == before);
        return {xi, xi};
      }
      u -= rr;
    }
    for (const auto& [j, r] : counts) {
      if (j < 2) continue;
      double rr = static_cast<double>(r);
      double frag = b(j) * rr;
      if (u < frag) {
        s.remove_part(x, j);
        s.add_part(x, j - 1);
        s.add_part(x, 1);
        assert(s.total() == before);
        return {xi, xi};
      }
      u -= frag;
      if (r1 > 0.0) {
        double coag = a(j) * rr * r1;
        if (u < coag) {
          s.remove_part(x, j);
          s.remove_part(x, 1);
          s.add_part(x, j + 1);
          assert(s.total() == before);
          return {xi, xi};
        }
        u -= coag;
      }
    }
    // rounding sliver: treat as a self-jump of a monomer if one exists
    if (r1 > 0.0) {
      return {xi, xi};
    }
    throw std::logic_error("coag-frag event selection fell through");
  }

  std::map<SpatialPartitionState, double> transitions(
      const SpatialPartitionState& s) const override {
    std::map<SpatialPartitionState, double> out;
    for (std::size_t xi = 0; xi < window().size(); ++xi) {
      const Site& x = window()[xi];
      auto it = s.sites().find(x);
      if (it == s.sites().end()) continue;
      const auto counts = it->second.counts();
      auto r1_it = counts.find(1);
      double r1 = r1_it == counts.end() ? 0.0 : static_cast<double>(r1_it->second);
      if (r1 > 0.0) {
        for (std::size_t yi = 0; yi < window().size(); ++yi) {
          double txy = jumps_.t(xi, yi);
          if (txy <= 0.0) continue;
          SpatialPartitionState nxt = s;
          nxt.remove_part(x, 1);
          nxt.add_part(window()[yi], 1);
          out[nxt] += r1 * txy;
        }
        if (r1 >= 2.0 && a(1) > 0.0) {
          SpatialPartitionState nxt = s;
          nxt.remove_part(x, 1, 2);
          nxt.add_part(x, 2);
          out[nxt] += a(1) * r1 * (r1 - 1.0);
        }
      }
      for (const auto& [j, r] : counts) {
        if (j < 2) continue;
        double rr = static_cast<double>(r);
        if (b(j) > 0.0) {
          SpatialPartitionState nxt = s;
          nxt.remove_part(x, j);
          nxt.add_part(x, j - 1);
          nxt.add_part(x, 1);
          out[nxt] += b(j) * rr;
        }
        if (r1 > 0.0 && a(j) > 0.0) {
          SpatialPartitionState nxt = s;
          nxt.remove_part(x, j);
          nxt.remove_part(x, 1);
          nxt.add_part(x, j + 1);
          out[nxt] += a(j) * rr * r1;
        }
      }
    }
    return out;
  }

  double log_stationary_weight(const SpatialPartitionState& s) const override {
    return log_state_weight(w_, *lat_, s);
  }

 private:
  WeightSequence w_;
  std::shared_ptr<const LatticeWeights> lat_;
  JumpKernel jumps_;
  std::vector<double> a_;  // a_j for j = 1 .. J
  std::vector<double> b_;  // b_j for j = 2 .. J + 1, stored from index 1
};

// Zero-range process on site masses: one unit hops x -> y at rate
// g(eta_x) t(x, y) with g(n) = h_{n-1} / h_n.  States are carried as
// single-component partitions of mass eta_x; its stationary weight is the
// product of h_{eta_x} e^{-eta_x V}.
class ZeroRangeKernel : public TransitionKernel {
 public:
  ZeroRangeKernel(WeightSequence w, std::shared_ptr<const LatticeWeights> lat,
                  JumpKernel jumps, std::uint64_t n_max)
      : lat_(std::move(lat)),
        jumps_(std::move(jumps)),
        h_(std::make_shared<HTable>(w.prefix(n_max))) {
    if (n_max == 0) throw std::invalid_argument("n_max must be >= 1");
    require_reversible(jumps_, *lat_);
  }

  const JumpKernel& jumps() const override { return jumps_; }
  const HTable& h() const { return *h_; }

  double g(std::uint64_t eta) const { return eta == 0 ? 0.0 : h_->g(eta); }

  double site_rate(const SpatialPartitionState& s,
                   std::size_t xi) const override {
    return g(s.eta(window()[xi]));
  }

  std::pair<std::size_t, std::size_t> apply_event_at(SpatialPartitionState& s,
                                                     std::size_t xi,
                                                     Rng& rng) const override {
    const Site& x = window()[xi];
    const std::uint64_t before = s.total();
    std::uint64_t eta_x = s.eta(x);
    assert(eta_x > 0);
    std::size_t yi = jumps_.sample_dest(xi, rng);
    if (yi != xi) {
      const Site& y = window()[yi];
      std::uint64_t eta_y = s.eta(y);
      set_mass(s, x, eta_x - 1);
      set_mass(s, y, eta_y + 1);
    }
    assert(s.total() == before);
    (void)before;
    return {xi, yi};
  }

  std::map<SpatialPartitionState, double> transitions(
      const SpatialPartitionState& s) const override {
    std::map<SpatialPartitionState, double> out;
    for (std::size_t xi = 0; xi < window().size(); ++xi) {
      const Site& x = window()[xi];
      std::uint64_t eta_x = s.eta(x);
      if (eta_x == 0) continue;
      double gx = g(eta_x);
      for (std::size_t yi = 0; yi < window().size(); ++yi) {
        double txy = jumps_.t(xi, yi);
        if (txy <= 0.0) continue;
        SpatialPartitionState nxt = s;
        if (yi != xi) {
          const Site& y = window()[yi];
          std::uint64_t eta_y = nxt.eta(y);
          set_mass(nxt, x, eta_x - 1);
          set_mass(nxt, y, eta_y + 1);
        }
        out[nxt] += gx * txy;
      }
    }
    return out;
  }

  double log_stationary_weight(const SpatialPartitionState& s) const override {
    return log_masses_weight(*h_, *lat_, s);
  }

  static void set_mass(SpatialPartitionState& s, const Site& x,
                       std::uint64_t m) {
    Partition p;
    if (m > 0) p.add_part(m);
    s.set_site(x, p);
  }

  // project a full partition state onto masses (one part per site)
  static SpatialPartitionState project(const SpatialPartitionState& s) {
    SpatialPartitionState out;
    for (const auto& [x, p] : s.sites()) out.add_part(x, p.total());
    return out;
  }

 private:
  std::shared_ptr<const LatticeWeights> lat_;
  JumpKernel jumps_;
  std::shared_ptr<const HTable> h_;
};

// ---------------------------------------------------------------------------
// Gillespie driver with a prefix-sum tree over per-site rates: selection and
// the two post-event updates are O(log S).

class Simulator {
 public:
  Simulator(const TransitionKernel& k, SpatialPartitionState initial)
      : k_(k), state_(std::move(initial)), tree_(k.window().size()) {
    for (std::size_t i = 0; i < tree_.size(); ++i)
      tree_.set(i, k_.site_rate(state_, i));
  }

  const SpatialPartitionState& state() const { return state_; }
  double time() const { return t_; }
  std::uint64_t events() const { return events_; }
  double total_rate() const { return tree_.total(); }

  // one event; false when the state is absorbing
  bool step(Rng& rng) {
    double total = tree_.total();
    if (total <= 0.0) return false;
    t_ += rng.exponential() / total;
    std::size_t xi = tree_.sample(rng.uniform() * total);
    if (tree_.get(xi) <= 0.0) {
      // numerical edge of the prefix search: take any active site
      xi = tree_.size();
      for (std::size_t i = 0; i < tree_.size(); ++i) {
        if (tree_.get(i) > 0.0) {
          xi = i;
          break;
        }
      }
      if (xi == tree_.size()) return false;
    }
    auto [ai, bi] = k_.apply_event_at(state_, xi, rng);
    tree_.set(ai, k_.site_rate(state_, ai));
    if (bi != ai) tree_.set(bi, k_.site_rate(state_, bi));
    ++events_;
    // guard against additive drift in the tree over very long runs
    if ((events_ & ((1ull << 22) - 1)) == 0) tree_.rebuild();
    return true;
  }

 private:
  const TransitionKernel& k_;
  SpatialPartitionState state_;
  detail::FenwickTree tree_;
  double t_ = 0.0;
  std::uint64_t events_ = 0;
};

struct RecordSpec {
  double sample_dt = 1.0;
  std::uint64_t max_events = 1000000000ull;
  std::uint64_t r_max = 0;    // record r_1 .. r_{r_max} when > 0
  bool keep_masses = false;   // store the site-mass map per epoch
};

struct TrajectoryEpoch {
  double t = 0.0;
  std::uint64_t n = 0;
  std::uint64_t origin_mass = 0;
  std::uint64_t max_site_mass = 0;
  std::uint64_t max_component = 0;
  std::uint64_t num_components = 0;
  std::vector<std::uint64_t> r;
  std::optional<std::map<Site, std::uint64_t>> masses;
};

struct TrajectoryRecord {
  std::vector<TrajectoryEpoch> epochs;
  SpatialPartitionState final_state;
  double horizon = 0.0;
  std::uint64_t events = 0;
  bool truncated = false;

  std::string to_csv() const {
    std::string out = "t,n,origin_mass,max_site_mass,max_component,num_components";
    std::size_t r_cols = epochs.empty() ? 0 : epochs.front().r.size();
    for (std::size_t j = 1; j <= r_cols; ++j)
      out += ",r_" + format_u64(j);
    out += "\n";
    for (const auto& e : epochs) {
      out += format_double(e.t);
      out += "," + format_u64(e.n);
      out += "," + format_u64(e.origin_mass);
      out += "," + format_u64(e.max_site_mass);
      out += "," + format_u64(e.max_component);
      out += "," + format_u64(e.num_components);
      for (std::size_t j = 0; j < r_cols; ++j)
        out += "," + format_u64(j < e.r.size() ? e.r[j] : 0);
      out += "\n";
    }
    return out;
  }
};

inline TrajectoryEpoch snapshot(double t, const SpatialPartitionState& s,
                                const RecordSpec& spec) {
  TrajectoryEpoch e;
  e.t = t;
  e.n = s.total();
  e.origin_mass = s.origin_mass();
  e.max_site_mass = s.max_site_mass();
  e.max_component = s.max_component();
  e.num_components = s.num_components();
  if (spec.r_max > 0) {
    e.r.assign(spec.r_max, 0);
    for (const auto& [j, r] : s.size_counts())
      if (j <= spec.r_max) e.r[j - 1] = r;
  }
  if (spec.keep_masses) {
    std::map<Site, std::uint64_t> m;
    for (const auto& [x, p] : s.sites()) m[x] = p.total();
    e.masses = std::move(m);
  }
  return e;
}

// Runs the chain to the time horizon (or to the event budget, which sets
// the truncated flag and stops recording).  sample_dt > 0 snapshots the
// state at fixed epochs t = 0, dt, 2 dt, ...; sample_dt <= 0 snapshots
// after every event instead.  final_state is the state at the horizon, or
// at the truncation point when the budget ran out first.
inline TrajectoryRecord simulate(const TransitionKernel& k,
                                 SpatialPartitionState initial, double horizon,
                                 const RecordSpec& spec, Rng& rng) {
  TrajectoryRecord rec;
  rec.horizon = horizon;
  Simulator sim(k, std::move(initial));
  const bool event_mode = !(spec.sample_dt > 0.0);
  rec.epochs.push_back(snapshot(0.0, sim.state(), spec));
  if (sim.total_rate() <= 0.0) {
    rec.final_state = sim.state();
    return rec;
  }
  double next_epoch = spec.sample_dt;
  auto fill_epochs = [&](double up_to, const SpatialPartitionState& s) {
    if (event_mode) return;
    while (next_epoch <= std::min(up_to, horizon)) {
      rec.epochs.push_back(snapshot(next_epoch, s, spec));
      next_epoch += spec.sample_dt;
    }
  };
  std::uint64_t applied = 0;  // events that landed within the horizon
  for (;;) {
    if (applied >= spec.max_events) {
      rec.truncated = true;
      rec.final_state = sim.state();
      break;
    }
    const SpatialPartitionState before = sim.state();
    bool moved = sim.step(rng);
    if (!moved) {
      // absorbing state: it holds through the rest of the horizon
      fill_epochs(horizon, before);
      rec.final_state = before;
      break;
    }
    double t_new = sim.time();
    fill_epochs(t_new, before);
    if (t_new > horizon) {
      rec.final_state = before;
      break;
    }
    ++applied;
    if (event_mode) rec.epochs.push_back(snapshot(t_new, sim.state(), spec));
    if (t_new == horizon) {
      rec.final_state = sim.state();
      break;
    }
  }
  rec.events = applied;
  return rec;
}

// masses trajectory: collapse consecutive epochs with equal site masses
inline std::vector<std::pair<double, std::map<Site, std::uint64_t>>>
zero_range_projection(const TrajectoryRecord& rec) {
  std::vector<std::pair<double, std::map<Site, std::uint64_t>>> out;
  for (const auto& e : rec.epochs) {
    if (!e.masses)
      throw std::invalid_argument(
          "zero_range_projection: record has no mass snapshots");
    if (out.empty() || out.back().second != *e.masses)
      out.emplace_back(e.t, *e.masses);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive detailed-balance verification on enumerable state spaces.

struct BalanceReport {
  double max_violation = 0.0;          // relative, against the larger flow
  std::uint64_t transitions_checked = 0;
};

inline BalanceReport check_detailed_balance(
    const TransitionKernel& k, const std::vector<SpatialPartitionState>& states) {
  if (states.size() > 200000)
    throw std::invalid_argument("state space too large for exact balance check");
  std::map<SpatialPartitionState, std::size_t> index;
  std::vector<double> logw(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    index[states[i]] = i;
    logw[i] = k.log_stationary_weight(states[i]);
  }
  double log_ref = -std::numeric_limits<double>::infinity();
  for (double lw : logw) log_ref = std::max(log_ref, lw);

  std::vector<std::map<SpatialPartitionState, double>> rates(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    rates[i] = k.transitions(states[i]);

  BalanceReport rep;
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (const auto& [target, q] : rates[i]) {
      auto it = index.find(target);
      if (it == index.end())
        throw std::logic_error("transition leaves the enumerated space");
      std::size_t jdx = it->second;
      if (jdx == i) continue;
      double fwd = std::exp(logw[i] - log_ref) * q;
      double q_back = 0.0;
      auto back = rates[jdx].find(states[i]);
      if (back != rates[jdx].end()) q_back = back->second;
      double rev = std::exp(logw[jdx] - log_ref) * q_back;
      double scale = std::max({fwd, rev, 1e-300});
      rep.max_violation = std::max(rep.max_violation, std::abs(fwd - rev) / scale);
      ++rep.transitions_checked;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Closed-form effective rates of the projected processes.

// effective mass-hop rate of the reshuffle projection, theta_1 h_{n-1}/h_n
inline double effective_mass_hop_rate(const HTable& h, std::uint64_t eta,
                                      double t_xy) {
  if (eta == 0) return 0.0;
  return h.theta(1) * h.g(eta) * t_xy;
}

// effective coagulation rate after integrating out placements:
// a_j r_1 r_j sum_x p_{x,1} p_{x,j}, and the overlap sum collapses to
// c_{j+1} / (c_1 c_j) because the site weights multiply
inline double placement_overlap(const LatticeWeights& lat, std::uint64_t j) {
  return lat.c(j + 1) / (lat.c(1) * lat.c(j));
}

inline double effective_coag_rate(const LatticeWeights& lat, double a_j,
                                  std::uint64_t j, std::uint64_t r1,
                                  std::uint64_t rj) {
  return a_j * static_cast<double>(r1) * static_cast<double>(rj) *
         placement_overlap(lat, j);
}

// ---------------------------------------------------------------------------
// Canned initial states.

enum class InitialStateKind { kAllAtOrigin, kAllSingletons, kCanonicalDraw };

inline SpatialPartitionState initial_state(InitialStateKind kind,
                                           std::uint64_t n,
                                           const std::vector<Site>& window,
                                           const CanonicalEnsemble* can = nullptr,
                                           Rng* rng = nullptr) {
  SpatialPartitionState s;
  if (n == 0) return s;
  switch (kind) {
    case InitialStateKind::kAllAtOrigin: {
      // one component carrying all mass at the window's origin-most site
      Site origin = make_site(0);
      bool in_window = false;
      for (const auto& x : window) in_window = in_window || (x == origin);
      s.add_part(in_window ? origin : window.front(), n);
      return s;
    }
    case InitialStateKind::kAllSingletons: {
      for (std::uint64_t i = 0; i < n; ++i)
        s.add_part(window[i % window.size()], 1);
      return s;
    }
    case InitialStateKind::kCanonicalDraw: {
      if (can == nullptr || rng == nullptr)
        throw std::invalid_argument("canonical draw needs ensemble and rng");
      // redraw until every component lands inside the window
      std::map<Site, bool> in;
      for (const auto& x : window) in[x] = true;
      for (int attempt = 0; attempt < 100000; ++attempt) {
        SpatialPartitionState cand = can->sample(n, *rng);
        bool ok = true;
        for (const auto& [x, p] : cand.sites()) ok = ok && in.count(x) > 0;
        if (ok) return cand;
      }
      throw std::runtime_error("canonical draw kept leaving the window");
    }
  }
  throw std::logic_error("unknown initial state kind");
}

}  // namespace partitia
