#pragma once

// Self-contained random number generation: a xoshiro256** engine plus the
// handful of variate generators the toolkit needs (uniform, exponential,
// normal, gamma, Poisson, categorical).  Variates are generated by fixed
// algorithms rather than <random> distributions so that a given (seed,
// replica) pair yields the same stream on every build of this code base.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace partitia {

struct SplitMix64 {
  std::uint64_t s;
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  // Distinct replicas of one experiment draw from statistically independent
  // streams derived from (master seed, replica index).
  Rng(std::uint64_t master_seed, std::uint64_t replica) {
    SplitMix64 sm{master_seed};
    std::uint64_t base = sm.next();
    reseed(base ^ (0x9E3779B97F4A7C15ULL * (replica + 1)));
  }

  void reseed(std::uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto& w : s_) w = sm.next();
    have_normal_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1); safe as a log argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential() { return -std::log(uniform_pos()); }

  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return cached_normal_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    have_normal_ = true;
    return r * std::cos(a);
  }

  // Marsaglia-Tsang squeeze for shape >= 1, with the power boost for
  // shape < 1.  Unit scale.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
    if (shape < 1.0) {
      double u = uniform_pos();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::uint64_t poisson(double mean) {
    if (mean < 0.0) throw std::invalid_argument("poisson: mean must be >= 0");
    if (mean == 0.0) return 0;
    if (mean < 30.0) return poisson_inversion(mean);
    return poisson_ptrs(mean);
  }

  // Index i with probability weights[i] / sum(weights).  Linear scan; callers
  // with large supports should build a CumulativeTable instead.
  std::size_t categorical(const std::vector<double>& weights, double total) {
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t poisson_inversion(double mean) {
    const double l = std::exp(-mean);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform_pos();
    } while (p > l);
    return k - 1;
  }

  // Hoermann's PTRS transformed rejection; exact for all means, used above
  // the inversion cutoff.
  std::uint64_t poisson_ptrs(double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform_pos();
      double us = 0.5 - std::abs(u);
      double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          -mean + kf * loglam - std::lgamma(kf + 1.0)) {
        return static_cast<std::uint64_t>(kf);
      }
    }
  }

  std::uint64_t s_[4];
  bool have_normal_ = false;
  double cached_normal_ = 0.0;
};

// Precomputed cumulative weights for repeated categorical draws from one
// fixed distribution.  Sampling is a binary search.
class CumulativeTable {
 public:
  CumulativeTable() = default;
  explicit CumulativeTable(const std::vector<double>& weights) {
    cum_.reserve(weights.size());
    double acc = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("CumulativeTable: negative weight");
      acc += w;
      cum_.push_back(acc);
    }
    total_ = acc;
    if (!(total_ > 0.0))
      throw std::invalid_argument("CumulativeTable: total weight must be > 0");
  }

  std::size_t sample(Rng& rng) const {
    double u = rng.uniform() * total_;
    std::size_t lo = 0, hi = cum_.size() - 1;
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (cum_[mid] <= u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

  double total() const { return total_; }
  std::size_t size() const { return cum_.size(); }

 private:
  std::vector<double> cum_;
  double total_ = 0.0;
};

}  // namespace partitia
