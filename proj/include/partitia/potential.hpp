#pragma once

// External potentials V on R^d and the integrals int exp(-j V(x)) dx.  Three
// shapes ship: the unit box (V = 0 inside, hard wall outside), radial powers
// c * |x|^delta (delta = 2 is the isotropic quadratic well), and a custom
// radial profile evaluated by quadrature.  Radial powers have the closed
// form  S_{d-1} Gamma(d/delta) / (delta (j c)^{d/delta}),  which the
// quadrature path must reproduce; a test pins that agreement.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "partitia/quadrature.hpp"

namespace partitia {

enum class PotentialKind { kSquare, kPower, kCustomRadial };

class Potential {
 public:
  static Potential square() {
    Potential p;
    p.kind_ = PotentialKind::kSquare;
    return p;
  }

  // V(x) = c |x|^delta.
  static Potential power(double delta, double c = 1.0) {
    if (!(delta > 0.0) || !(c > 0.0))
      throw std::invalid_argument("power potential needs delta > 0, c > 0");
    Potential p;
    p.kind_ = PotentialKind::kPower;
    p.delta_ = delta;
    p.c_ = c;
    return p;
  }

  static Potential quadratic(double beta) { return power(2.0, beta); }

  // V(x) = f(|x|), f nondecreasing with f(0) = 0 expected.
  static Potential custom_radial(std::function<double(double)> f,
                                 std::string label = "custom") {
    if (!f) throw std::invalid_argument("custom potential needs a function");
    Potential p;
    p.kind_ = PotentialKind::kCustomRadial;
    p.radial_fn_ = std::move(f);
    p.label_ = std::move(label);
    return p;
  }

  PotentialKind kind() const { return kind_; }
  double delta() const { return delta_; }
  double strength() const { return c_; }
  bool is_square() const { return kind_ == PotentialKind::kSquare; }

  // V at radius r (square: 0 inside the unit box's inscribed radius
  // handling is done coordinatewise in V(), not here).
  double radial(double r) const {
    switch (kind_) {
      case PotentialKind::kSquare:
        throw std::logic_error("square potential is not radial");
      case PotentialKind::kPower:
        return c_ * std::pow(r, delta_);
      case PotentialKind::kCustomRadial:
        return radial_fn_(r);
    }
    return 0.0;
  }

  // V(x) for x in R^d; +infinity encodes the hard wall.
  template <class Coords>
  double value(const Coords& x, int d) const {
    if (kind_ == PotentialKind::kSquare) {
      for (int i = 0; i < d; ++i) {
        if (!(x[i] > -0.5 && x[i] <= 0.5))
          return std::numeric_limits<double>::infinity();
      }
      return 0.0;
    }
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) r2 += x[i] * x[i];
    return radial(std::sqrt(r2));
  }

  // int_{R^d} exp(-j V(x)) dx.
  double continuum_integral(double j, int d, double rel_tol = 1e-8) const {
    if (!(j > 0.0) || d < 1)
      throw std::invalid_argument("continuum_integral: bad arguments");
    switch (kind_) {
      case PotentialKind::kSquare:
        return 1.0;
      case PotentialKind::kPower: {
        const double dd = static_cast<double>(d);
        return surface_area(d) *
               std::exp(std::lgamma(dd / delta_) -
                        (dd / delta_) * std::log(j * c_)) /
               delta_;
      }
      case PotentialKind::kCustomRadial: {
        // r = e^s turns the boundary layer that e^{-j f(r)} develops near
        // r = 0 at large j into a smooth bump on the line; locate the bump
        // by a coarse scan, then integrate outward from it on both sides
        auto g = [&](double s) {
          double v = radial_fn_(std::exp(s));
          if (!std::isfinite(v)) return 0.0;
          double e = static_cast<double>(d) * s - j * v;
          return e < -745.0 ? 0.0 : std::exp(e);
        };
        double s0 = 0.0, peak = g(0.0);
        for (double s = -200.0; s <= 20.0; s += 0.25) {
          double val = g(s);
          if (val > peak) {
            peak = val;
            s0 = s;
          }
        }
        auto res = integrate_to_inf([&](double u) { return g(s0 + u); }, 0.0,
                                    0.5 * rel_tol);
        auto mirror = integrate_to_inf([&](double u) { return g(s0 - u); },
                                       0.0, 0.5 * rel_tol);
        return surface_area(d) * (res.value + mirror.value);
      }
    }
    return 0.0;
  }

  // |S^{d-1}| = 2 pi^{d/2} / Gamma(d/2).
  static double surface_area(int d) {
    const double dd = static_cast<double>(d);
    return 2.0 * std::pow(3.14159265358979323846264338327950, 0.5 * dd) /
           std::tgamma(0.5 * dd);
  }

  std::string describe() const {
    switch (kind_) {
      case PotentialKind::kSquare:
        return "square";
      case PotentialKind::kPower:
        return "power(delta=" + std::to_string(delta_) + ",c=" + std::to_string(c_) + ")";
      case PotentialKind::kCustomRadial:
        return label_;
    }
    return "?";
  }

 private:
  Potential() = default;
  PotentialKind kind_ = PotentialKind::kSquare;
  double delta_ = 1.0;
  double c_ = 1.0;
  std::function<double(double)> radial_fn_;
  std::string label_;
};

}  // namespace partitia
