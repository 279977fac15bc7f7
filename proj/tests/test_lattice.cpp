#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "partitia/lattice.hpp"
#include "partitia/potential.hpp"
#include "partitia/rng.hpp"
#include "partitia/special.hpp"

using namespace partitia;

namespace {

// direct lattice sum over a box, no truncation logic shared with the library
double brute_c(const Potential& pot, int d, double L, double j, std::int64_t R) {
  double total = 0.0;
  std::vector<std::int64_t> x(d, -R);
  for (;;) {
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) {
      double xi = static_cast<double>(x[i]) / L;
      r2 += xi * xi;
    }
    total += std::exp(-j * pot.radial(std::sqrt(r2)));
    int i = 0;
    while (i < d && ++x[i] > R) x[i++] = -R;
    if (i == d) break;
  }
  return total;
}

double chi2_pvalue(const std::map<Site, std::uint64_t>& hits,
                   const LatticeWeights& lat, std::uint64_t j, double n_draws) {
  // pool sites with small expected count into one cell
  double stat = 0.0, pooled_exp = 0.0, pooled_obs = 0.0, covered = 0.0;
  int cells = 0;
  for (const auto& [site, cnt] : hits) {
    double p = std::exp(lat.log_site_prob(j, site));
    double e = n_draws * p;
    covered += p;
    if (e < 10.0) {
      pooled_exp += e;
      pooled_obs += static_cast<double>(cnt);
      continue;
    }
    double diff = static_cast<double>(cnt) - e;
    stat += diff * diff / e;
    ++cells;
  }
  // remaining probability mass never hit belongs to the pooled cell
  pooled_exp += n_draws * (1.0 - covered);
  if (pooled_exp > 0.0) {
    double diff = pooled_obs - pooled_exp;
    stat += diff * diff / pooled_exp;
    ++cells;
  }
  return chi2_sf(stat, cells - 1);
}

}  // namespace

TEST_CASE("potential shapes and closed-form integrals", "[lattice]") {
  auto sq = Potential::square();
  CHECK(sq.is_square());
  CHECK_THROWS(sq.radial(0.3));
  CHECK(sq.continuum_integral(5.0, 3) == 1.0);

  auto pw = Potential::power(1.0);
  CHECK(pw.radial(0.5) == 0.5);
  // d = 1: int e^{-j|x|} dx = 2/j
  CHECK(pw.continuum_integral(4.0, 1) == Catch::Approx(0.5).epsilon(1e-12));

  auto quad = Potential::quadratic(1.7);
  // gaussian integral (pi / (j beta))^{d/2}
  for (int d = 1; d <= 3; ++d) {
    double want = std::pow(M_PI / (3.0 * 1.7), d / 2.0);
    CHECK(quad.continuum_integral(3.0, d) == Catch::Approx(want).epsilon(1e-12));
  }

  // the quadrature fallback must agree with the closed forms
  struct Case {
    double delta, c;
    int d;
    double j;
  } cases[] = {{0.5, 1.0, 1, 2.0}, {2.0, 1.7, 2, 3.0}, {0.75, 2.0, 3, 1.0}};
  for (const auto& cs : cases) {
    auto closed = Potential::power(cs.delta, cs.c);
    auto via_quad = Potential::custom_radial(
        [&](double r) { return cs.c * std::pow(r, cs.delta); }, "pow");
    double a = closed.continuum_integral(cs.j, cs.d);
    double b = via_quad.continuum_integral(cs.j, cs.d, 1e-10);
    CHECK(b == Catch::Approx(a).epsilon(1e-7));
  }
}

TEST_CASE("lattice construction guards", "[lattice]") {
  CHECK_THROWS(LatticeWeights(Potential::square(), 1, 2.5));
  CHECK_THROWS(LatticeWeights(Potential::power(1.0), 4, 8.0));
  CHECK_THROWS(LatticeWeights(Potential::power(1.0), 1, -3.0));
  CHECK_THROWS(LatticeWeights(Potential::power(1.0), 1, 8.0, 0.5));
}

TEST_CASE("square box sums and window", "[lattice]") {
  for (int d = 1; d <= 3; ++d) {
    LatticeWeights lat(Potential::square(), d, 7.0);
    CHECK(lat.c(1) == std::pow(7.0, d));
    CHECK(lat.c(9) == std::pow(7.0, d));
    auto cert = lat.c_certificate(3);
    CHECK(cert.exact);
    CHECK(cert.tail_bound == 0.0);
    auto win = lat.window_sites(0.5);
    CHECK(win.size() == static_cast<std::size_t>(std::pow(7.0, d)));
    CHECK(std::is_sorted(win.begin(), win.end()));
    for (const auto& s : win) CHECK(lat.site_weight(2.0, s) == 1.0);
  }
  // even box: sites in (-L/2, L/2], so x runs -1..2 for L = 4
  LatticeWeights lat(Potential::square(), 1, 4.0);
  auto win = lat.window_sites(0.9);
  REQUIRE(win.size() == 4);
  CHECK(win.front().c[0] == -1);
  CHECK(win.back().c[0] == 2);
}

TEST_CASE("axis sums match geometric series", "[lattice]") {
  // V(x) = |x|: c_j(L) = 1 + 2 e^{-j/L} / (1 - e^{-j/L})
  LatticeWeights lat(Potential::power(1.0), 1, 10.0);
  for (std::uint64_t j : {1, 3, 17}) {
    double q = std::exp(-static_cast<double>(j) / 10.0);
    double want = (1.0 + q) / (1.0 - q);
    CHECK(lat.c(j) == Catch::Approx(want).epsilon(1e-12));
    auto cert = lat.c_certificate(j);
    CHECK_FALSE(cert.exact);
    CHECK(cert.tail_bound <= 1e-11 * want);
  }
}

TEST_CASE("separable and shell paths agree with brute force", "[lattice]") {
  // quadratic well in d = 2 goes through the separable axis product
  {
    Potential quad = Potential::quadratic(0.8);
    LatticeWeights lat(quad, 2, 5.0);
    double want = brute_c(quad, 2, 5.0, 1.0, 60);
    CHECK(lat.c(1) == Catch::Approx(want).epsilon(1e-11));
    want = brute_c(quad, 2, 5.0, 4.0, 40);
    CHECK(lat.c(4) == Catch::Approx(want).epsilon(1e-11));
  }
  // custom radial in d = 2 exercises the shell decomposition
  {
    Potential lin = Potential::custom_radial([](double r) { return r; }, "r");
    LatticeWeights lat(lin, 2, 4.0);
    double want = brute_c(lin, 2, 4.0, 1.0, 150);
    CHECK(lat.c(1) == Catch::Approx(want).epsilon(1e-9));
    // same function through the closed-form power path: strong cross-check
    LatticeWeights lat_pow(Potential::power(1.0), 2, 4.0);
    CHECK(lat_pow.c(1) == Catch::Approx(lat.c(1)).epsilon(1e-9));
    CHECK(lat_pow.c(5) == Catch::Approx(lat.c(5)).epsilon(1e-9));
  }
  // d = 3 shell path
  {
    Potential p15 =
        Potential::custom_radial([](double r) { return std::pow(r, 1.5); }, "r15");
    LatticeWeights lat(p15, 3, 3.0);
    double want = brute_c(p15, 3, 3.0, 2.0, 30);
    CHECK(lat.c(2) == Catch::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("lattice sums approach the continuum integral", "[lattice]") {
  Potential pot = Potential::power(0.5);
  double I1 = pot.continuum_integral(1.0, 1);
  double prev = 1e300;
  for (double L : {8.0, 32.0, 128.0}) {
    LatticeWeights lat(pot, 1, L);
    double gap = lat.riemann_gap(1);
    CHECK(gap < prev);
    prev = gap;
  }
  LatticeWeights lat(pot, 1, 128.0);
  CHECK(lat.c(1) / 128.0 == Catch::Approx(I1).epsilon(0.02));
}

TEST_CASE("site samplers match placement probabilities", "[lattice]") {
  Rng rng(991);
  const double n_draws = 200000;

  SECTION("axis sampler, d = 1") {
    LatticeWeights lat(Potential::power(1.0), 1, 6.0);
    std::map<Site, std::uint64_t> hits;
    for (int i = 0; i < n_draws; ++i) ++hits[lat.sample_site(2, rng)];
    CHECK(chi2_pvalue(hits, lat, 2, n_draws) > 1e-4);
  }

  SECTION("separable sampler, d = 2") {
    LatticeWeights lat(Potential::quadratic(1.0), 2, 3.0);
    std::map<Site, std::uint64_t> hits;
    for (int i = 0; i < n_draws; ++i) ++hits[lat.sample_site(1, rng)];
    CHECK(chi2_pvalue(hits, lat, 1, n_draws) > 1e-4);
  }

  SECTION("shell sampler, d = 2") {
    Potential lin = Potential::custom_radial([](double r) { return r; }, "r");
    LatticeWeights lat(lin, 2, 3.0);
    std::map<Site, std::uint64_t> hits;
    for (int i = 0; i < n_draws; ++i) ++hits[lat.sample_site(2, rng)];
    CHECK(chi2_pvalue(hits, lat, 2, n_draws) > 1e-4);
  }

  SECTION("square box is uniform") {
    LatticeWeights lat(Potential::square(), 2, 4.0);
    std::map<Site, std::uint64_t> hits;
    for (int i = 0; i < n_draws; ++i) ++hits[lat.sample_site(1, rng)];
    REQUIRE(hits.size() == 16);
    double stat = 0.0;
    for (const auto& [site, cnt] : hits) {
      double e = n_draws / 16.0;
      stat += (cnt - e) * (cnt - e) / e;
    }
    CHECK(chi2_sf(stat, 15) > 1e-4);
  }

  SECTION("same seed reproduces the site stream") {
    LatticeWeights lat(Potential::power(0.5), 1, 12.0);
    Rng a(7), b(7);
    for (int i = 0; i < 200; ++i) {
      CHECK(lat.sample_site(3, a) == lat.sample_site(3, b));
    }
  }
}

TEST_CASE("window sites cover the requested level set", "[lattice]") {
  LatticeWeights lat(Potential::power(1.0), 1, 10.0);
  // e^{-|x|/10} >= e^{-2}  <=>  |x| <= 20
  auto win = lat.window_sites(std::exp(-2.0));
  CHECK(win.size() == 41);
  CHECK(std::is_sorted(win.begin(), win.end()));
  CHECK(win.front().c[0] == -20);
  CHECK(win.back().c[0] == 20);

  LatticeWeights sq(Potential::square(), 2, 3.0);
  auto box = sq.window_sites(1e-6);
  REQUIRE(box.size() == 9);
  CHECK(box.front() == make_site(-1, -1));
  CHECK(box.back() == make_site(1, 1));
}
