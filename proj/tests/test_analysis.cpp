#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "partitia/canonical.hpp"
#include "partitia/cramer.hpp"
#include "partitia/density.hpp"
#include "partitia/lattice.hpp"
#include "partitia/quadrature.hpp"
#include "partitia/special.hpp"
#include "partitia/stable.hpp"
#include "partitia/stats.hpp"

using namespace partitia;

namespace {

constexpr double kZeta15 = 2.6123753486854883;
constexpr double kZeta2 = 1.6449340668482264;
constexpr double kZeta3 = 1.2020569031595943;
constexpr double kZeta4 = 1.0823232337111382;

DensitySeries cubic_square() {
  return DensitySeries(WeightSequence::algebraic(-3.0), Potential::square(), 1);
}

}  // namespace

TEST_CASE("density series matches closed forms", "[analysis]") {
  auto ds = cubic_square();
  // square box: rho(z) = sum_j j^{-3} z^j = Li_3(z)
  CHECK(ds.rho(0.0) == 0.0);
  CHECK(ds.rho(1.0) == Catch::Approx(kZeta3).epsilon(1e-12));
  CHECK(ds.rho(0.5) == Catch::Approx(0.537213193608040).epsilon(1e-12));
  CHECK(ds.critical_activity() == 1.0);
  CHECK(ds.rho_c() == Catch::Approx(kZeta3).epsilon(1e-12));

  // quadratic trap, d = 3, V = 2|x|^2, theta = 1:
  // rho_c = (pi/2)^{3/2} zeta(3/2)
  DensitySeries trap(WeightSequence::constant(1.0), Potential::quadratic(2.0), 3);
  CHECK(trap.critical_activity() == 1.0);
  CHECK(trap.rho_c() == Catch::Approx(5.1429865967021302).epsilon(1e-10));

  // rho is strictly increasing on (0, z_c)
  double prev = 0.0;
  for (int k = 1; k <= 10; ++k) {
    double cur = ds.rho(0.1 * k);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("density series rejects activities beyond the radius", "[analysis]") {
  auto ds = cubic_square();
  CHECK_THROWS_AS(ds.rho(1.0 + 1e-9), std::domain_error);
  CHECK_THROWS_AS(ds.rho(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(DensitySeries(WeightSequence::constant(1.0),
                                Potential::square(), 4),
                  std::invalid_argument);
}

TEST_CASE("size and occupation representations agree", "[analysis]") {
  struct Fam {
    const char* name;
    DensitySeries ds;
  } fams[] = {
      {"cubic square", cubic_square()},
      {"quadratic zrp",
       DensitySeries(WeightSequence::algebraic(-2.0), Potential::power(0.5), 1)},
      {"flat trap d3",
       DensitySeries(WeightSequence::constant(1.0), Potential::quadratic(2.0), 3)},
  };
  for (const auto& f : fams) {
    INFO(f.name);
    const double zc = f.ds.critical_activity();
    for (int k = 1; k <= 20; ++k) {
      const double z = zc * k / 21.0;
      const double series = f.ds.rho(z);
      const double ratio = f.ds.rho_occupation_route(z);
      INFO("z = " << z);
      CHECK(ratio == Catch::Approx(series).epsilon(1e-8));
    }
  }
}

TEST_CASE("activity solver inverts the density curve", "[analysis]") {
  auto ds = cubic_square();
  const double rc = ds.rho_c();

  const double target = 0.5 * rc;
  const double z = ds.solve_activity(target);
  CHECK(ds.rho(z) == Catch::Approx(target).epsilon(1e-10));

  // saturation at and above the critical density
  CHECK(ds.solve_activity(rc) == ds.critical_activity());
  CHECK(ds.solve_activity(10.0 * rc) == ds.critical_activity());
  CHECK(ds.solve_activity(0.0) == 0.0);
  CHECK_THROWS_AS(ds.solve_activity(-1.0), std::invalid_argument);

  // round trip z -> rho -> z
  for (double z0 : {0.1, 0.45, 0.9}) {
    CHECK(ds.solve_activity(ds.rho(z0)) == Catch::Approx(z0).epsilon(1e-10));
  }
}

TEST_CASE("condensate fraction above the critical density", "[analysis]") {
  auto ds = cubic_square();
  // nu = 1 - zeta(3)/rho at rho = 3
  CHECK(ds.condensate_fraction(3.0) ==
        Catch::Approx(0.59931436561346857).epsilon(1e-12));
  CHECK(ds.condensate_fraction(0.5 * ds.rho_c()) == 0.0);
  CHECK(ds.condensate_fraction(ds.rho_c()) == 0.0);
  CHECK(ds.condensate_fraction(0.0) == 0.0);
}

TEST_CASE("typical size and occupation limits", "[analysis]") {
  auto ds = cubic_square();
  const double rho = 3.0;
  auto lim = ds.typical_limits(rho, 5, 5);

  CHECK(lim.z0 == 1.0);
  CHECK(lim.condensate_fraction ==
        Catch::Approx(0.59931436561346857).epsilon(1e-12));

  // j R_j / n -> theta_j z_c^j I_j / rho = j^{-3} / 3
  REQUIRE(lim.size_mass.size() == 5);
  for (std::uint64_t j = 1; j <= 5; ++j) {
    CHECK(lim.size_mass[j - 1] ==
          Catch::Approx(std::pow(static_cast<double>(j), -3.0) / rho)
              .epsilon(1e-12));
  }

  // mass fractions never negative, and tail + condensate close the budget
  double covered = lim.condensate_fraction;
  auto counts = ds.component_count_limits(rho, 400);
  for (std::uint64_t j = 1; j <= 400; ++j) covered += counts[j - 1] * j;
  CHECK(covered == Catch::Approx(1.0).margin(2e-6));

  // k P(eta_x = k) integrated over the box, against the generating identity
  const double occ[5] = {0.11293582721042278, 0.12705280561172563,
                         0.081826189622366508, 0.041163627606885388,
                         0.018721270120716664};
  REQUIRE(lim.occupation_mass.size() == 5);
  for (int k = 0; k < 5; ++k)
    CHECK(lim.occupation_mass[k] == Catch::Approx(occ[k]).epsilon(1e-8));
}

TEST_CASE("free energy limit and entropy identity", "[analysis]") {
  auto ds = cubic_square();
  // rho = 3 supercritical: F = zeta(4)/3 at z_0 = 1
  const double f = ds.free_energy_limit(3.0);
  CHECK(f == Catch::Approx(kZeta4 / 3.0).epsilon(1e-12));
  CHECK(std::isinf(ds.free_energy_limit(0.0)));

  // -I at the component-count limits recovers the free energy
  auto a = ds.component_count_limits(3.0, 2000);
  CHECK(-ds.entropy_functional(a, 3.0) == Catch::Approx(f).margin(1e-8));

  // perturbed vectors score strictly worse
  auto b = a;
  b[0] *= 1.25;
  CHECK(-ds.entropy_functional(b, 3.0) < f);
  auto c = a;
  c[2] = 0.0;
  CHECK(-ds.entropy_functional(c, 3.0) < f);
  CHECK_THROWS_AS(ds.entropy_functional({-0.1}, 3.0), std::invalid_argument);
}

TEST_CASE("finite volume free energy approaches the limit", "[analysis]") {
  // square box, theta_j = j^{-3}, rho = 3: Z_n = h_n with theta_j V and the
  // per-particle log partition function converges to the limit functional
  auto ds = cubic_square();
  const double flim = ds.free_energy_limit(3.0);
  double prev_gap = std::numeric_limits<double>::infinity();
  for (std::uint64_t n : {100ull, 1000ull}) {
    const double vol = static_cast<double>(n) / 3.0;
    std::vector<double> theta(n);
    for (std::uint64_t j = 1; j <= n; ++j)
      theta[j - 1] = std::pow(static_cast<double>(j), -3.0) * vol;
    HTable h(theta);
    const double fn = h.log_h(n) / static_cast<double>(n);
    const double gap = std::abs(fn - flim);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(prev_gap < 0.05);
}

TEST_CASE("critical variance closed forms and divergence flags", "[analysis]") {
  // square, theta_j = j^{-3}: sigma_c^2 = sum_j j^{-2} = zeta(2)
  auto sc = cubic_square().sigma_c_squared();
  CHECK(sc.finite);
  CHECK(sc.value == Catch::Approx(kZeta2).epsilon(1e-10));

  // square, theta_j = j^{-3/2}: sum_j j^{-1/2} diverges
  DensitySeries heavy(WeightSequence::algebraic(-1.5), Potential::square(), 1);
  auto sh = heavy.sigma_c_squared();
  CHECK_FALSE(sh.finite);
  CHECK(std::isinf(sh.value));

  // d = 1, V = |x|^{3/4}, theta = 1: I_j ~ j^{-4/3}, sum_j j^{-1/3} diverges
  DensitySeries soft(WeightSequence::constant(1.0), Potential::power(0.75), 1);
  auto ss = soft.sigma_c_squared();
  CHECK_FALSE(ss.finite);

  // d = 1, V = |x|^{2/5}, theta = 1: sigma_c^2 = 2 Gamma(3.5) zeta(1.5)
  DensitySeries steep(WeightSequence::constant(1.0), Potential::power(0.4), 1);
  auto st = steep.sigma_c_squared();
  CHECK(st.finite);
  CHECK(st.value == Catch::Approx(17.363680300455878).epsilon(1e-10));

  // same trap through the quadrature route
  DensitySeries quad(
      WeightSequence::constant(1.0),
      Potential::custom_radial([](double r) { return std::pow(r, 0.4); }), 1);
  auto sq = quad.sigma_c_squared();
  CHECK(sq.finite);
  CHECK(sq.value == Catch::Approx(st.value).epsilon(1e-5));
}

TEST_CASE("lattice critical density", "[analysis]") {
  // square box: rho_c^L = sum_j theta_j (V-1)/V exactly
  auto w3 = WeightSequence::algebraic(-3.0);
  auto box = std::make_shared<LatticeWeights>(Potential::square(), 1, 4.0);
  CHECK(lattice_critical_density(w3, *box) ==
        Catch::Approx(kZeta3 * 3.0 / 4.0).epsilon(1e-12));

  // d = 1 trap V = |x|^{1/2}, theta_j = j^{-2}, L = 40
  auto w2 = WeightSequence::algebraic(-2.0);
  LatticeWeights trap(Potential::power(0.5), 1, 40.0);
  const double rc_l = lattice_critical_density(w2, trap);
  CHECK(rc_l == Catch::Approx(4.2942967506769077).epsilon(1e-9));

  // the finite volume value sits below the continuum limit 4 zeta(4)
  CHECK(rc_l < 4.0 * kZeta4);
}

TEST_CASE("cramer truncation rule", "[analysis]") {
  CHECK(cramer_truncation(0.45) == 0);
  CHECK(cramer_truncation(0.5) == 1);
  CHECK(cramer_truncation(0.6) == 1);
  CHECK(cramer_truncation(0.7) == 2);
  CHECK(cramer_truncation(0.75) == 3);
}

TEST_CASE("cramer cumulants and lambda coefficients", "[analysis]") {
  // theta_j = j e^{-j^{0.6}}: kappa_k = sum_j j^k e^{-j^{0.6}}
  auto cd = cramer_series(WeightSequence::stretched_j(0.6), 0.6);
  REQUIRE(cd.truncation == 1);
  REQUIRE(cd.kappa.size() >= 4);
  CHECK(cd.kappa[0] == Catch::Approx(4.5665245091175574).epsilon(1e-10));
  CHECK(cd.kappa[1] == Catch::Approx(39.994160840751699).epsilon(1e-10));
  CHECK(cd.kappa[2] == Catch::Approx(648.39614832333195).epsilon(1e-10));
  CHECK(cd.kappa[3] == Catch::Approx(16566.820178951627).epsilon(1e-10));

  // lambda_0 = kappa_3 / (6 kappa_2^3)
  REQUIRE(cd.lambda.size() == 2);
  const double k2 = cd.kappa[1], k3 = cd.kappa[2], k4 = cd.kappa[3];
  CHECK(cd.lambda[0] == Catch::Approx(k3 / (6.0 * k2 * k2 * k2)).epsilon(1e-12));
  CHECK(cd.lambda[0] == Catch::Approx(lambda0_closed_form(cd)).epsilon(1e-14));
  CHECK(cd.lambda[0] == Catch::Approx(0.0016892713225894749).epsilon(1e-9));

  // lambda_1 = -(3 kappa_3^2 - kappa_2 kappa_4) / (24 kappa_2^5)
  const double l1 = -(3.0 * k3 * k3 - k2 * k4) / (24.0 * std::pow(k2, 5.0));
  CHECK(cd.lambda[1] == Catch::Approx(l1).epsilon(1e-12));
  CHECK(cd.lambda[1] == Catch::Approx(-0.00024378002403744549).epsilon(1e-9));

  // constant weights have no finite cumulants
  CHECK_THROWS(cramer_series(WeightSequence::constant(1.0), 0.5));
}

TEST_CASE("lambda fit recovers the series coefficients", "[analysis]") {
  for (double gamma : {0.5, 0.6}) {
    INFO("gamma = " << gamma);
    auto w = WeightSequence::stretched_j(gamma);
    auto cd = cramer_series(w, gamma);
    auto fit = legendre_lambda_fit(w, cd);
    REQUIRE(fit.lambda.size() >= cd.lambda.size());
    for (std::size_t k = 0; k < cd.lambda.size(); ++k) {
      INFO("k = " << k);
      CHECK(fit.lambda[k] == Catch::Approx(cd.lambda[k]).epsilon(1e-6));
    }
  }
}

TEST_CASE("single atom weights pin the lambda series", "[analysis]") {
  // theta_1 = 2, theta_j = 0 otherwise: the component count is Poisson(2)
  // and lambda_k = (-1)^k / ((k+3)(k+2) theta^{k+2}) in closed form
  auto w = WeightSequence::custom({2.0});
  auto cd = cramer_series(w, 0.7);
  REQUIRE(cd.truncation == 2);
  REQUIRE(cd.lambda.size() == 3);
  CHECK(cd.lambda[0] == Catch::Approx(1.0 / 24.0).epsilon(1e-12));
  CHECK(cd.lambda[1] == Catch::Approx(-1.0 / 96.0).epsilon(1e-12));
  CHECK(cd.lambda[2] == Catch::Approx(1.0 / 320.0).epsilon(1e-12));

  auto fit = legendre_lambda_fit(w, cd);
  CHECK(fit.lambda[0] == Catch::Approx(1.0 / 24.0).epsilon(1e-6));
  CHECK(fit.lambda[1] == Catch::Approx(-1.0 / 96.0).epsilon(1e-6));
  CHECK(fit.lambda[2] == Catch::Approx(1.0 / 320.0).epsilon(1e-5));
}

TEST_CASE("droplet shift matches the asymptotic scale", "[analysis]") {
  auto cd = cramer_series(WeightSequence::stretched_j(0.6), 0.6);
  const double rho = cd.kappa1() + 4.0;

  double prev_ratio = std::numeric_limits<double>::infinity();
  DropletShift last;
  for (double L : {1e3, 1e4, 1e5}) {
    INFO("L = " << L);
    auto r = droplet_shift(cd, rho, L, 1);
    CHECK(r.shift > 0.0);
    CHECK(r.asymptotic_ratio < prev_ratio);
    prev_ratio = r.asymptotic_ratio;
    last = r;
  }
  CHECK(last.asymptotic_ratio == Catch::Approx(1.0).margin(0.1));

  // the minimizer is interior: small against the total excess, locally
  // convex, and below the near-boundary values
  auto f = surface_energy(cd, rho, 1e5, 1);
  const double D = f.max_shift();
  CHECK(last.shift < 0.1 * D);
  CHECK(f.second_derivative(last.shift) > 0.0);
  CHECK(f(0.01 * D) > last.energy);
  CHECK(f(0.9 * D) > last.energy);
}

TEST_CASE("droplet shift trend at low stretch", "[analysis]") {
  // gamma = 0.45 truncates the correction series to the quadratic term and
  // the shift scales as L^{d gamma}; shift / sqrt(L) must decrease
  auto cd = cramer_series(WeightSequence::stretched_j(0.45), 0.45);
  REQUIRE(cd.truncation == 0);
  const double rho = cd.kappa1() + 20.0;

  double prev_scaled = std::numeric_limits<double>::infinity();
  for (double L : {1e4, 1e5, 1e6}) {
    INFO("L = " << L);
    auto r = droplet_shift(cd, rho, L, 1);
    auto f = surface_energy(cd, rho, L, 1);
    const double scaled = r.shift / std::sqrt(L);
    CHECK(scaled < prev_scaled);
    prev_scaled = scaled;
    CHECK(r.energy > 0.0);
    CHECK(r.shift < 0.05 * f.max_shift());
  }
}

TEST_CASE("stable tail constant", "[analysis]") {
  // M(alpha) = Gamma(2-alpha) / (alpha (alpha-1))
  CHECK(stable_tail_constant(1.5) ==
        Catch::Approx(2.3632718012073547).epsilon(1e-12));

  // independent route: M(alpha) = int_0^infty (e^{-u} - 1 + u) u^{-1-alpha} du,
  // with u = v^2 smoothing the head and the algebraic part of the tail
  // integrated in closed form
  auto head = [](double v) {
    const double u = v * v;
    if (v < 0.01) return 1.0 - u / 3.0 + u * u / 12.0;
    return 2.0 * (std::expm1(-u) + u) * std::pow(v, -4.0);
  };
  auto tail = [](double u) { return std::exp(-u) * std::pow(u, -2.5); };
  const double m = integrate(head, 0.0, 1.0, 1e-10).value +
                   integrate_to_inf(tail, 1.0, 1e-10).value + 4.0 / 3.0;
  CHECK(m == Catch::Approx(stable_tail_constant(1.5)).epsilon(1e-8));

  CHECK_THROWS_AS(stable_tail_constant(1.0), std::invalid_argument);
  CHECK_THROWS_AS(stable_tail_constant(2.0), std::invalid_argument);
}

TEST_CASE("heavy tail sampler laplace transform", "[analysis]") {
  const double alpha = 1.5;
  auto s = heavy_tail_limit_sampler(alpha);
  const double m = stable_tail_constant(alpha);

  // E e^{-tY} = exp(M(alpha) t^alpha / alpha)
  CHECK(std::exp(s.log_laplace(1.0)) == Catch::Approx(std::exp(m / alpha)));

  Rng rng(8811);
  const int n = 1000000;
  std::vector<double> ys(n);
  for (auto& y : ys) y = s.sample(rng);

  for (double t : {0.25, 0.5, 1.0}) {
    INFO("t = " << t);
    double acc = 0.0;
    for (double y : ys) acc += std::exp(-t * y);
    const double want = std::exp(m * std::pow(t, alpha) / alpha);
    CHECK(acc / n == Catch::Approx(want).epsilon(0.02));
  }

  // P(Y > y) ~ C y^{-alpha}: the dyadic count ratio pins the exponent
  int n20 = 0, n80 = 0;
  for (double y : ys) {
    if (y > 20.0) ++n20;
    if (y > 80.0) ++n80;
  }
  REQUIRE(n80 > 100);
  const double slope = std::log(static_cast<double>(n20) / n80) / std::log(4.0);
  CHECK(slope == Catch::Approx(alpha).margin(0.15));

  CHECK_THROWS_AS(heavy_tail_limit_sampler(2.5), std::invalid_argument);
  CHECK_THROWS_AS(StableSampler(1.5, 0.0), std::invalid_argument);
}

TEST_CASE("trap limit sampler", "[analysis]") {
  // gamma = -1/2, delta = 4/5, d = 1: b from the surface integral
  const double b = b_coefficient(-0.5, 0.8, 1);
  CHECK(b == Catch::Approx(6.2595462888556545).epsilon(1e-8));

  const double at = 1.75;  // |gamma| + d/delta
  auto s = algebraic_trap_limit_sampler(b, at);

  Rng rng(4427);
  const int n = 1000000;
  std::vector<double> zs(n);
  for (auto& z : zs) z = s.sample(rng);

  // E e^{tZ} = exp(b t^{7/4}) for t >= 0
  for (double t : {0.2, 0.4, 0.5}) {
    INFO("t = " << t);
    double acc = 0.0;
    for (double z : zs) acc += std::exp(t * z);
    const double want = std::exp(b * std::pow(t, at));
    CHECK(acc / n == Catch::Approx(want).epsilon(0.02));
  }

  // the negative tail carries the power law
  int n20 = 0, n80 = 0;
  for (double z : zs) {
    if (z < -20.0) ++n20;
    if (z < -80.0) ++n80;
  }
  REQUIRE(n80 > 100);
  const double slope = std::log(static_cast<double>(n20) / n80) / std::log(4.0);
  CHECK(slope == Catch::Approx(at).margin(0.2));

  CHECK_THROWS_AS(b_coefficient(0.5, 0.8, 1), std::invalid_argument);
  CHECK_THROWS_AS(b_coefficient(-0.5, 0.3, 1), std::invalid_argument);
  CHECK_THROWS_AS(b_coefficient(-0.5, 0.8, 4), std::invalid_argument);
  CHECK_THROWS_AS(algebraic_trap_limit_sampler(-1.0, 1.75),
                  std::invalid_argument);
}

TEST_CASE("gamma series sampler", "[analysis]") {
  // d = 1, theta = 1, delta = 3/4: total variance 2 zeta(3/2) at any cutoff
  GammaSeriesSampler wide(1.0, 0.75, 1, 2000);
  CHECK(wide.series_variance() + wide.tail_variance() ==
        Catch::Approx(2.0 * kZeta15).epsilon(1e-12));
  CHECK(wide.tail_variance() > 0.0);
  CHECK(wide.sites() == 4000);

  GammaSeriesSampler s(1.0, 0.75, 1, 200);
  CHECK(s.series_variance() + s.tail_variance() ==
        Catch::Approx(2.0 * kZeta15).epsilon(1e-12));

  Rng rng(9152);
  const int n = 200000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = s.sample(rng);
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / n;
  const double var = acc2 / n - mean * mean;
  const double sd = std::sqrt(2.0 * kZeta15 / n);
  CHECK(std::abs(mean) < 4.0 * sd);
  CHECK(var == Catch::Approx(2.0 * kZeta15).epsilon(0.05));

  CHECK_THROWS_AS(GammaSeriesSampler(1.0, 0.5, 1, 100), std::invalid_argument);
  CHECK_THROWS_AS(GammaSeriesSampler(0.0, 0.75, 1, 100), std::invalid_argument);
  CHECK_THROWS_AS(GammaSeriesSampler(1.0, 0.75, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(GammaSeriesSampler(1.0, 0.75, 4, 100), std::invalid_argument);
}

TEST_CASE("poisson cluster sampler pmf", "[analysis]") {
  // theta_j = j^{-2}: P(sum = k) = h_k e^{-zeta(3)} for k within the cutoff
  PoissonClusterSampler s(WeightSequence::algebraic(-2.0), 2000);
  const double pmf[11] = {
      0.30057532130329562,   0.30057532130329562,   0.18785957581455976,
      0.098800221354324024,  0.049487082703002086,  0.025173878935357729,
      0.013439500467499972,  0.007629205217810237,  0.0046100163367159935,
      0.0029498957256698022, 0.001983985097034798};
  for (int k = 0; k <= 10; ++k) {
    INFO("k = " << k);
    CHECK(s.pmf(k) == Catch::Approx(pmf[k]).epsilon(1e-6));
  }
  CHECK(s.truncation_mass() < 1e-6);
  CHECK_THROWS_AS(s.pmf(5000), std::out_of_range);
}

TEST_CASE("poisson cluster sampler distribution", "[analysis]") {
  PoissonClusterSampler s(WeightSequence::algebraic(-2.0), 50);
  Rng rng(60125);
  const int n = 200000;
  const std::size_t kbins = 30;
  std::vector<std::uint64_t> observed(kbins + 1, 0);
  for (int i = 0; i < n; ++i) {
    std::uint64_t k = s.sample(rng);
    ++observed[std::min<std::uint64_t>(k, kbins)];
  }
  std::vector<double> probs(kbins + 1, 0.0);
  double covered = 0.0;
  for (std::size_t k = 0; k < kbins; ++k) {
    probs[k] = s.pmf(k);
    covered += probs[k];
  }
  probs[kbins] = 1.0 - covered;
  auto res = chi2_gof(observed, probs);
  CHECK(res.p_value > 0.001);
}

TEST_CASE("kolmogorov smirnov calibration", "[analysis]") {
  // one-sample p-values under the null are themselves uniform
  std::vector<double> pvals;
  for (unsigned seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    std::vector<double> xs(200);
    for (auto& x : xs) x = rng.uniform();
    pvals.push_back(
        ks_one_sample(std::move(xs), [](double x) { return x; }).p_value);
  }
  auto meta = ks_one_sample(pvals, [](double x) { return x; });
  CHECK(meta.p_value > 0.01);

  // a half-unit location error at n = 10^4 is decisively rejected
  Rng rng(77);
  std::vector<double> ys(10000);
  for (auto& y : ys) y = rng.normal() + 0.5;
  auto bad = ks_one_sample(std::move(ys), [](double x) { return normal_cdf(x); });
  CHECK(bad.p_value < 1e-6);

  CHECK_THROWS_AS(
      ks_one_sample(std::vector<double>(10, 0.5), [](double) { return 0.5; }),
      std::invalid_argument);
}

TEST_CASE("two sample kolmogorov smirnov", "[analysis]") {
  Rng rng(311);
  std::vector<double> a(500), b(600);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();

  auto same = ks_two_sample(a, b);
  CHECK(same.p_value > 0.01);
  auto swapped = ks_two_sample(b, a);
  CHECK(same.statistic == swapped.statistic);
  CHECK(same.n1 == swapped.n2);

  for (auto& x : b) x += 0.5;
  CHECK(ks_two_sample(a, b).p_value < 1e-6);

  CHECK_THROWS_AS(ks_two_sample(std::vector<double>(10, 0.0), a),
                  std::invalid_argument);
}

TEST_CASE("chi squared goodness of fit", "[analysis]") {
  // Poisson(5) draws against the exact pmf with a complement bin
  const double mean = 5.0;
  const std::size_t kbins = 25;
  std::vector<double> probs(kbins + 1, 0.0);
  double p = std::exp(-mean), covered = 0.0;
  for (std::size_t k = 0; k < kbins; ++k) {
    probs[k] = p;
    covered += p;
    p *= mean / static_cast<double>(k + 1);
  }
  probs[kbins] = 1.0 - covered;

  Rng rng(5017);
  std::vector<std::uint64_t> observed(kbins + 1, 0);
  for (int i = 0; i < 200000; ++i)
    ++observed[std::min<std::uint64_t>(rng.poisson(mean), kbins)];
  auto good = chi2_gof(observed, probs);
  CHECK(good.p_value > 0.001);
  CHECK(good.dof >= 10);

  // the same counts against a mean 6 pmf fail decisively
  std::vector<double> wrong(kbins + 1, 0.0);
  p = std::exp(-6.0);
  covered = 0.0;
  for (std::size_t k = 0; k < kbins; ++k) {
    wrong[k] = p;
    covered += p;
    p *= 6.0 / static_cast<double>(k + 1);
  }
  wrong[kbins] = 1.0 - covered;
  CHECK(chi2_gof(observed, wrong).p_value < 1e-6);

  // a lone cell cannot be tested
  CHECK_THROWS_AS(chi2_gof({100}, {1.0}), std::invalid_argument);
}

TEST_CASE("condensate statistics of a state", "[analysis]") {
  SpatialPartitionState s;
  s.add_part(make_site(0), 7);
  s.add_part(make_site(0), 2);
  s.add_part(make_site(3), 4);
  auto cs = condensate_stats(s);
  CHECK(cs.n == 13);
  CHECK(cs.origin_mass == 9);
  CHECK(cs.max_site_mass == 9);
  CHECK(cs.max_component == 7);
  CHECK(cs.peak_site_component == 7);

  // tie on site mass resolves to the first site in coordinate order
  SpatialPartitionState t;
  t.add_part(make_site(-1), 3);
  t.add_part(make_site(-1), 3);
  t.add_part(make_site(2), 6);
  auto ct = condensate_stats(t);
  CHECK(ct.max_site_mass == 6);
  CHECK(ct.max_component == 6);
  CHECK(ct.peak_site_component == 3);
}

TEST_CASE("ensemble report tails and mass fractions", "[analysis]") {
  // all mass in one giant component: every tail fraction is 1
  SpatialPartitionState giant;
  giant.add_part(make_site(0), 64);
  auto rep = extract_stats({giant}, 3, 3);
  CHECK(rep.n == 64);
  CHECK(rep.replicas == 1);
  REQUIRE(rep.cutoffs.size() == 3);
  for (std::size_t c = 0; c < rep.cutoffs.size(); ++c) {
    CHECK(rep.nu_tail[c].mean == 1.0);
    CHECK(rep.mu_tail[c].mean == 1.0);
  }
  CHECK(rep.size_mass[0].mean == 0.0);
  CHECK(rep.stats[0].max_component == 64);

  // two replicas with distinct shapes average their fractions
  SpatialPartitionState a;
  a.add_part(make_site(0), 1);
  a.add_part(make_site(1), 1);
  SpatialPartitionState b;
  b.add_part(make_site(0), 2);
  auto two = extract_stats({a, b}, 2, 2, {1});
  CHECK(two.size_mass[0].mean == 0.5);   // j = 1 carries all of a, none of b
  CHECK(two.size_mass[1].mean == 0.5);   // j = 2 carries all of b
  CHECK(two.nu_tail[0].mean == 0.5);     // mass above cutoff 1
  CHECK(two.size_mass[0].se == Catch::Approx(0.5));

  // replicas must share the particle number
  SpatialPartitionState c;
  c.add_part(make_site(0), 3);
  CHECK_THROWS_AS(extract_stats({a, c}, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(extract_stats({}, 2, 2), std::invalid_argument);
}

TEST_CASE("ensemble report orders the condensate observables", "[analysis]") {
  // S_L <= T_L <= M_L <= n on every sampled state
  auto lat = std::make_shared<LatticeWeights>(Potential::square(), 1, 3.0);
  CanonicalEnsemble ens(WeightSequence::constant(1.0), lat, 6);
  Rng rng(2024);
  std::vector<SpatialPartitionState> states;
  for (int i = 0; i < 200; ++i) states.push_back(ens.sample(6, rng));
  auto rep = extract_stats(states, 6, 6);
  for (const auto& cs : rep.stats) {
    CHECK(cs.peak_site_component <= cs.max_component);
    CHECK(cs.max_component <= cs.max_site_mass);
    CHECK(cs.max_site_mass <= cs.n);
    CHECK(cs.n == 6);
  }

  // the mean size masses sum to one across j <= n
  double total = 0.0;
  for (const auto& sm : rep.size_mass) total += sm.mean;
  CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mean with error", "[analysis]") {
  auto m = mean_with_error({0.0, 1.0});
  CHECK(m.mean == 0.5);
  CHECK(m.se == Catch::Approx(0.5));
  auto single = mean_with_error({2.0});
  CHECK(single.mean == 2.0);
  CHECK(single.se == 0.0);
}
