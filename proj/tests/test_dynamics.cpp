#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "partitia/canonical.hpp"
#include "partitia/dynamics.hpp"
#include "partitia/lattice.hpp"
#include "partitia/special.hpp"

using namespace partitia;

namespace {

std::shared_ptr<const LatticeWeights> box1d(double L) {
  return std::make_shared<LatticeWeights>(Potential::square(), 1, L);
}

// every spatial state with total mass n supported on the given sites
std::vector<SpatialPartitionState> all_states(const std::vector<Site>& sites,
                                              std::uint64_t n) {
  std::vector<SpatialPartitionState> out;
  auto masses = compositions_of(n, sites.size());
  for (const auto& comp : masses) {
    std::vector<std::vector<Partition>> choices(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i)
      choices[i] = partitions_of(comp[i]);
    std::vector<std::size_t> idx(sites.size(), 0);
    for (;;) {
      SpatialPartitionState s;
      for (std::size_t i = 0; i < sites.size(); ++i) {
        for (const auto& [j, r] : choices[i][idx[i]].counts())
          s.add_part(sites[i], j, r);
      }
      out.push_back(std::move(s));
      std::size_t i = 0;
      while (i < sites.size() && ++idx[i] == choices[i].size()) idx[i++] = 0;
      if (i == sites.size()) break;
    }
  }
  return out;
}

// mass configurations carried as one component per occupied site
std::vector<SpatialPartitionState> all_mass_states(
    const std::vector<Site>& sites, std::uint64_t n) {
  std::vector<SpatialPartitionState> out;
  for (const auto& comp : compositions_of(n, sites.size())) {
    SpatialPartitionState s;
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (comp[i] > 0) s.add_part(sites[i], comp[i]);
    out.push_back(std::move(s));
  }
  return out;
}

// normalized stationary law of a kernel over an enumerated state space
struct EnumeratedLaw {
  std::vector<SpatialPartitionState> states;
  std::vector<double> probs;
  CumulativeTable cum;
  std::map<SpatialPartitionState, std::size_t> index;
};

EnumeratedLaw enumerate_law(const TransitionKernel& k,
                            std::vector<SpatialPartitionState> states) {
  EnumeratedLaw law;
  law.states = std::move(states);
  std::vector<double> logw(law.states.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < law.states.size(); ++i) {
    logw[i] = k.log_stationary_weight(law.states[i]);
    top = std::max(top, logw[i]);
  }
  law.probs.resize(law.states.size());
  double z = 0.0;
  for (std::size_t i = 0; i < law.states.size(); ++i) {
    law.probs[i] = std::exp(logw[i] - top);
    z += law.probs[i];
  }
  for (double& p : law.probs) p /= z;
  law.cum = CumulativeTable(law.probs);
  for (std::size_t i = 0; i < law.states.size(); ++i)
    law.index[law.states[i]] = i;
  return law;
}

// state at time T of a chain started from s0 (exact: last state before T)
SpatialPartitionState state_at(const TransitionKernel& k,
                               SpatialPartitionState s0, double T, Rng& rng) {
  Simulator sim(k, std::move(s0));
  for (;;) {
    SpatialPartitionState before = sim.state();
    if (!sim.step(rng)) return before;
    if (sim.time() > T) return before;
  }
}

// chi-square statistic with bins of expected count < 10 pooled together;
// pooling depends only on the expected counts, so it is identical across
// replica batches and the statistics can be summed
std::pair<double, std::uint64_t> chi2_stat(const std::vector<std::uint64_t>& obs,
                                           const std::vector<double>& probs,
                                           double n_draws) {
  double stat = 0.0, pooled_e = 0.0, pooled_o = 0.0;
  std::uint64_t cells = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double e = n_draws * probs[i];
    double o = static_cast<double>(obs[i]);
    if (e < 10.0) {
      pooled_e += e;
      pooled_o += o;
      continue;
    }
    stat += (o - e) * (o - e) / e;
    ++cells;
  }
  if (pooled_e > 0.0) {
    stat += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
    ++cells;
  }
  return {stat, cells - 1};
}

// invariance test: replicas start from an exact stationary draw, run for a
// fixed time, and the state at that time is tested against the same law;
// per-seed statistics and degrees of freedom are summed before the p-value
double stationarity_pvalue(const TransitionKernel& k, const EnumeratedLaw& law,
                           double T, int seeds, int reps,
                           std::uint64_t master_seed) {
  double stat_sum = 0.0;
  std::uint64_t dof_sum = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(master_seed, static_cast<std::uint64_t>(seed));
    std::vector<std::uint64_t> counts(law.states.size(), 0);
    for (int rep = 0; rep < reps; ++rep) {
      const auto& start = law.states[law.cum.sample(rng)];
      auto fin = state_at(k, start, T, rng);
      ++counts[law.index.at(fin)];
    }
    auto [stat, dof] = chi2_stat(counts, law.probs, reps);
    stat_sum += stat;
    dof_sum += dof;
  }
  return chi2_sf(stat_sum, dof_sum);
}

double total_variation(const std::map<SpatialPartitionState, double>& a,
                       const std::map<SpatialPartitionState, double>& b) {
  double tv = 0.0;
  std::set<SpatialPartitionState> keys;
  for (const auto& [s, p] : a) keys.insert(s);
  for (const auto& [s, p] : b) keys.insert(s);
  for (const auto& s : keys) {
    auto ia = a.find(s), ib = b.find(s);
    double pa = ia == a.end() ? 0.0 : ia->second;
    double pb = ib == b.end() ? 0.0 : ib->second;
    tv += std::abs(pa - pb);
  }
  return 0.5 * tv;
}

}  // namespace

// ---------------------------------------------------------------------------
// prefix-sum tree

TEST_CASE("prefix tree matches a linear scan", "[dynamics]") {
  partitia::detail::FenwickTree tree(13);
  std::vector<double> ref(13, 0.0);
  Rng rng(99);
  for (int step = 0; step < 2000; ++step) {
    std::size_t i = static_cast<std::size_t>(rng.uniform() * 13);
    double v = step % 7 == 0 ? 0.0 : rng.uniform() * 3.0;
    tree.set(i, v);
    ref[i] = v;
    double tot = 0.0;
    for (double x : ref) tot += x;
    REQUIRE(tree.total() == Catch::Approx(tot).margin(1e-12));
    if (tot <= 0.0) continue;
    double u = rng.uniform() * tot;
    std::size_t got = tree.sample(u);
    std::size_t want = 0;
    double acc = 0.0;
    for (; want < ref.size(); ++want) {
      acc += ref[want];
      if (u < acc) break;
    }
    if (want == ref.size()) want = ref.size() - 1;
    REQUIRE(got == want);
  }
  tree.rebuild();
  double tot = 0.0;
  for (double x : ref) tot += x;
  REQUIRE(tree.total() == Catch::Approx(tot).margin(1e-12));
}

// ---------------------------------------------------------------------------
// jump kernels

TEST_CASE("equilibrium jump rows are stochastic and reversible", "[dynamics]") {
  auto lat = std::make_shared<LatticeWeights>(Potential::power(1.0), 1, 4.0);
  auto window = lat->window_sites(0.3);
  REQUIRE(window.size() == 9);
  auto jumps = JumpKernel::equilibrium(*lat, window);
  for (std::size_t x = 0; x < jumps.size(); ++x) {
    double row = 0.0;
    for (std::size_t y = 0; y < jumps.size(); ++y) row += jumps.t(x, y);
    REQUIRE(row == Catch::Approx(1.0).margin(1e-12));
  }
  REQUIRE(jumps.reversibility_violation(*lat) <= 1e-14);
  // heavier weight at the bottom of the trap
  std::size_t origin = jumps.index_of(make_site(0));
  std::size_t edge = jumps.index_of(make_site(4));
  REQUIRE(jumps.t(0, origin) > jumps.t(0, edge));
}

TEST_CASE("explicit jump rows are validated", "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  REQUIRE_THROWS_AS(
      JumpKernel::from_rows(window, {{0.5, 0.6}, {0.5, 0.5}}),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      JumpKernel::from_rows(window, {{-0.1, 1.1}, {0.5, 0.5}}),
      std::invalid_argument);
  // stochastic but not reversible for the flat box: kernels refuse it
  auto skew = JumpKernel::from_rows(window, {{0.3, 0.7}, {0.5, 0.5}});
  REQUIRE(skew.reversibility_violation(*lat) > 0.1);
  REQUIRE_THROWS_AS(
      ElementMoveKernel(1.0, lat, skew),
      std::invalid_argument);
}

// ---------------------------------------------------------------------------
// single-element moves (constant weights)

TEST_CASE("element move rate and join probabilities match hand values",
          "[dynamics]") {
  // occupied site with theta = 1 fires at rate eta / (theta + eta - 1) = 1
  auto lat = box1d(1.0);
  auto window = lat->window_sites(0.5);
  REQUIRE(window.size() == 1);
  ElementMoveKernel k(1.0, lat, JumpKernel::equilibrium(*lat, window));
  REQUIRE(k.g(3) == 1.0);
  REQUIRE(k.g(0) == 0.0);

  // from one component of size 4: the element leaves it, and on the
  // post-departure state (mass 3) it founds a new component with
  // probability theta / (eta + theta) = 1/4
  SpatialPartitionState s;
  s.add_part(make_site(0), 4);
  auto trans = k.transitions(s);
  SpatialPartitionState split;
  split.add_part(make_site(0), 3);
  split.add_part(make_site(0), 1);
  REQUIRE(trans.size() == 2);
  REQUIRE(trans.at(split) == Catch::Approx(0.25).epsilon(1e-12));
  REQUIRE(trans.at(s) == Catch::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("element move chain satisfies detailed balance", "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(2.0, lat, JumpKernel::equilibrium(*lat, window));
  auto states = all_states(window, 3);
  REQUIRE(states.size() == 10);
  auto rep = check_detailed_balance(k, states);
  REQUIRE(rep.transitions_checked > 0);
  REQUIRE(rep.max_violation <= 1e-10);
}

TEST_CASE("element move chain on a windowed trap satisfies detailed balance",
          "[dynamics]") {
  // level-set window of a linear trap; the jump row renormalizes on it and
  // the restricted fixed-mass measure stays exactly stationary
  auto lat = std::make_shared<LatticeWeights>(Potential::power(1.0), 1, 4.0);
  auto window = lat->window_sites(0.3);
  REQUIRE(window.size() == 9);
  ElementMoveKernel k(1.5, lat, JumpKernel::equilibrium(*lat, window));
  auto states = all_states(window, 3);
  auto rep = check_detailed_balance(k, states);
  REQUIRE(rep.max_violation <= 1e-10);
}

TEST_CASE("element move total rate is bounded by n over theta", "[dynamics]") {
  const double theta = 0.7;
  const std::uint64_t n = 4;
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(theta, lat, JumpKernel::equilibrium(*lat, window));
  SpatialPartitionState s0;
  s0.add_part(window[0], n);
  Simulator sim(k, s0);
  Rng rng(31);
  for (int step = 0; step < 3000; ++step) {
    REQUIRE(sim.total_rate() <= static_cast<double>(n) / theta + 1e-9);
    REQUIRE(sim.state().total() == n);
    REQUIRE(sim.step(rng));
  }
}

TEST_CASE("element move chain leaves the fixed-mass law invariant",
          "[dynamics]") {
  struct Case {
    double L;
    std::uint64_t n;
    double theta;
    int reps;
  } cases[] = {{2.0, 3, 2.0, 300}, {3.0, 3, 1.5, 600}, {2.0, 4, 0.7, 400}};
  for (const auto& c : cases) {
    auto lat = box1d(c.L);
    auto window = lat->window_sites(0.5);
    ElementMoveKernel k(c.theta, lat, JumpKernel::equilibrium(*lat, window));
    auto law = enumerate_law(k, all_states(window, c.n));
    double p = stationarity_pvalue(k, law, 2.0, 20, c.reps, 777);
    INFO("L=" << c.L << " n=" << c.n << " theta=" << c.theta);
    REQUIRE(p > 0.01);
  }
}

// ---------------------------------------------------------------------------
// reshuffle moves (general weights)

TEST_CASE("reshuffle chain satisfies detailed balance", "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ReshuffleKernel k(WeightSequence::algebraic(-2.0), lat,
                    JumpKernel::equilibrium(*lat, window), 3);
  auto states = all_states(window, 3);
  auto rep = check_detailed_balance(k, states);
  REQUIRE(rep.max_violation <= 1e-10);
}

TEST_CASE("reshuffle chain leaves the fixed-mass law invariant", "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ReshuffleKernel k(WeightSequence::algebraic(-2.0), lat,
                    JumpKernel::equilibrium(*lat, window), 3);
  auto law = enumerate_law(k, all_states(window, 3));
  double p = stationarity_pvalue(k, law, 2.0, 20, 300, 778);
  REQUIRE(p > 0.01);
}

TEST_CASE("reshuffle hop rate reduces to the constant-weights one",
          "[dynamics]") {
  // h_{n-1} / h_n = n / (theta + n - 1) for constant weights, so the mass
  // hop rates of the reshuffle chain and the element-move chain coincide
  const double theta = 2.0;
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ReshuffleKernel k(WeightSequence::constant(theta), lat,
                    JumpKernel::equilibrium(*lat, window), 10);
  for (std::uint64_t n = 1; n <= 10; ++n) {
    double want = static_cast<double>(n) / (theta + static_cast<double>(n) - 1.0);
    REQUIRE(k.g(n) == Catch::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("reshuffle chain with one element is the plain site walk",
          "[dynamics]") {
  // with total mass 1 each move relocates the element by t(x, .), so the
  // successive positions are iid with the equilibrium profile
  auto lat = std::make_shared<LatticeWeights>(Potential::power(1.0), 1, 3.0);
  auto window = lat->window_sites(0.1);
  auto jumps = JumpKernel::equilibrium(*lat, window);
  ReshuffleKernel k(WeightSequence::algebraic(-1.0), lat, jumps, 1);

  std::vector<double> probs(window.size());
  double tot = 0.0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    probs[i] = lat->site_weight(1.0, window[i]);
    tot += probs[i];
  }
  for (double& p : probs) p /= tot;

  SpatialPartitionState s;
  s.add_part(window[0], 1);
  Simulator sim(k, s);
  Rng rng(41);
  const int draws = 40000;
  std::vector<std::uint64_t> counts(window.size(), 0);
  for (int i = 0; i < draws; ++i) {
    REQUIRE(sim.step(rng));
    const auto& st = sim.state().sites();
    REQUIRE(st.size() == 1);
    std::size_t yi = jumps.index_of(st.begin()->first);
    ++counts[yi];
  }
  auto [stat, dof] = chi2_stat(counts, probs, draws);
  REQUIRE(chi2_sf(stat, dof) > 0.01);
}

// ---------------------------------------------------------------------------
// coagulation-fragmentation

TEST_CASE("fragmentation rates derived from coagulation rates", "[dynamics]") {
  // for flat weights a_j = j forces b_j = j
  auto w = WeightSequence::constant(1.0);
  auto b = CoagFragKernel::derive_b(w, {1.0, 2.0, 3.0});
  REQUIRE(b.size() == 4);
  for (std::size_t j = 2; j <= 4; ++j)
    REQUIRE(b[j - 1] == Catch::Approx(static_cast<double>(j)).epsilon(1e-12));
  auto a = CoagFragKernel::derive_a(w, b);
  REQUIRE(a.size() == 3);
  for (std::size_t j = 1; j <= 3; ++j)
    REQUIRE(a[j - 1] == Catch::Approx(static_cast<double>(j)).epsilon(1e-12));
}

TEST_CASE("coagulation-fragmentation chain satisfies detailed balance",
          "[dynamics]") {
  auto w = WeightSequence::algebraic(-2.0);
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  std::vector<double> a = {1.0, 1.0};
  CoagFragKernel k(w, lat, JumpKernel::equilibrium(*lat, window), a,
                   CoagFragKernel::derive_b(w, a));
  REQUIRE(k.matching_violation() <= 1e-12);
  auto states = all_states(window, 3);
  auto rep = check_detailed_balance(k, states);
  REQUIRE(rep.max_violation <= 1e-10);
}

TEST_CASE("mismatched fragmentation rates break detailed balance",
          "[dynamics]") {
  auto w = WeightSequence::algebraic(-2.0);
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  std::vector<double> a = {1.0, 1.0};
  auto b = CoagFragKernel::derive_b(w, a);
  for (double& v : b) v *= 1.01;
  REQUIRE_THROWS_AS(
      CoagFragKernel(w, lat, JumpKernel::equilibrium(*lat, window), a, b),
      std::invalid_argument);
  CoagFragKernel k(w, lat, JumpKernel::equilibrium(*lat, window), a, b,
                   /*validate=*/false);
  REQUIRE(k.matching_violation() == Catch::Approx(0.01 / 1.01).epsilon(1e-9));
  auto rep = check_detailed_balance(k, all_states(window, 3));
  REQUIRE(rep.max_violation > 3e-3);
  REQUIRE(rep.max_violation < 3e-2);
}

TEST_CASE("coagulation-fragmentation chain leaves the fixed-mass law invariant",
          "[dynamics]") {
  auto w = WeightSequence::constant(1.0);
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  std::vector<double> a = {1.0, 2.0};
  CoagFragKernel k(w, lat, JumpKernel::equilibrium(*lat, window), a,
                   CoagFragKernel::derive_b(w, a));
  auto law = enumerate_law(k, all_states(window, 3));
  double p = stationarity_pvalue(k, law, 2.0, 20, 300, 779);
  REQUIRE(p > 0.01);
}

TEST_CASE("single-site coagulation-fragmentation is stationary for the "
          "one-site law",
          "[dynamics]") {
  // no transport: one site, monomer exchange only within it; the chain is
  // the classic nucleation ladder and its stationary law at mass 4 is the
  // one-site partition law
  auto w = WeightSequence::constant(1.0);
  auto lat = box1d(1.0);
  auto window = lat->window_sites(0.5);
  REQUIRE(window.size() == 1);
  std::vector<double> a = {1.0, 2.0, 3.0};
  CoagFragKernel k(w, lat, JumpKernel::equilibrium(*lat, window), a,
                   CoagFragKernel::derive_b(w, a));
  auto states = all_states(window, 4);
  REQUIRE(states.size() == 5);
  auto law = enumerate_law(k, states);

  // the enumerated stationary law is exactly the one-site partition law
  HTable h = HTable::from_weights(w, 4);
  GibbsMeasure nu(h);
  for (std::size_t i = 0; i < states.size(); ++i) {
    Partition p;
    for (const auto& [j, r] : states[i].sites().begin()->second.counts())
      p.add_part(j, r);
    REQUIRE(law.probs[i] == Catch::Approx(nu.prob(p)).epsilon(1e-12));
  }

  auto rep = check_detailed_balance(k, states);
  REQUIRE(rep.max_violation <= 1e-10);
  double pval = stationarity_pvalue(k, law, 1.5, 20, 300, 780);
  REQUIRE(pval > 0.01);
}

// ---------------------------------------------------------------------------
// zero-range chain on site masses

TEST_CASE("zero-range chain satisfies detailed balance", "[dynamics]") {
  auto w = WeightSequence::custom({1.0, 0.5, 2.0, 0.25});
  auto lat = box1d(3.0);
  auto window = lat->window_sites(0.5);
  ZeroRangeKernel k(w, lat, JumpKernel::equilibrium(*lat, window), 4);
  auto states = all_mass_states(window, 4);
  REQUIRE(states.size() == 15);
  auto rep = check_detailed_balance(k, states);
  REQUIRE(rep.max_violation <= 1e-10);
}

TEST_CASE("zero-range stationary law is the product of mass weights",
          "[dynamics]") {
  auto w = WeightSequence::algebraic(-2.0);
  auto lat = box1d(3.0);
  auto window = lat->window_sites(0.5);
  ZeroRangeKernel k(w, lat, JumpKernel::equilibrium(*lat, window), 4);
  auto law = enumerate_law(k, all_mass_states(window, 4));

  // cross-check the enumerated law against h_{m_1} ... h_{m_S} directly
  HTable h = HTable::from_weights(w, 4);
  double z = 0.0;
  std::vector<double> want(law.states.size());
  for (std::size_t i = 0; i < law.states.size(); ++i) {
    double v = 1.0;
    for (const auto& [x, p] : law.states[i].sites()) v *= h.h(p.total());
    want[i] = v;
    z += v;
  }
  for (std::size_t i = 0; i < law.states.size(); ++i)
    REQUIRE(law.probs[i] == Catch::Approx(want[i] / z).epsilon(1e-10));

  double p = stationarity_pvalue(k, law, 2.0, 20, 400, 781);
  REQUIRE(p > 0.01);
}

TEST_CASE("zero-range chain with one element is the jump-kernel walk",
          "[dynamics]") {
  auto lat = std::make_shared<LatticeWeights>(Potential::power(2.0), 1, 3.0);
  auto window = lat->window_sites(0.05);
  auto jumps = JumpKernel::equilibrium(*lat, window);
  ZeroRangeKernel k(WeightSequence::constant(1.0), lat, jumps, 1);
  std::vector<double> probs(window.size());
  double tot = 0.0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    probs[i] = lat->site_weight(1.0, window[i]);
    tot += probs[i];
  }
  for (double& p : probs) p /= tot;
  SpatialPartitionState s;
  s.add_part(window[0], 1);
  Simulator sim(k, s);
  Rng rng(42);
  const int draws = 40000;
  std::vector<std::uint64_t> counts(window.size(), 0);
  for (int i = 0; i < draws; ++i) {
    REQUIRE(sim.step(rng));
    std::size_t yi = jumps.index_of(sim.state().sites().begin()->first);
    ++counts[yi];
  }
  auto [stat, dof] = chi2_stat(counts, probs, draws);
  REQUIRE(chi2_sf(stat, dof) > 0.01);
}

TEST_CASE("element-move mass jumps follow the zero-range jump chain",
          "[dynamics]") {
  // three sites, three elements, constant weights: the projected mass
  // process is Markov with hop rate g(eta_x) t(x, y); conditional jump
  // frequencies from a long element-move run must match it
  const double theta = 2.0;
  auto lat = box1d(3.0);
  auto window = lat->window_sites(0.5);
  auto jumps = JumpKernel::equilibrium(*lat, window);
  ElementMoveKernel crp(theta, lat, jumps);
  ZeroRangeKernel zrp(WeightSequence::constant(theta), lat, jumps, 3);

  auto mass_states = all_mass_states(window, 3);
  std::map<SpatialPartitionState, std::size_t> mass_index;
  for (std::size_t i = 0; i < mass_states.size(); ++i)
    mass_index[mass_states[i]] = i;

  // exact conditional law of the next distinct mass state
  std::vector<std::map<std::size_t, double>> jump_law(mass_states.size());
  for (std::size_t i = 0; i < mass_states.size(); ++i) {
    auto trans = zrp.transitions(mass_states[i]);
    double out_rate = 0.0;
    for (const auto& [target, q] : trans)
      if (!(target == mass_states[i])) out_rate += q;
    for (const auto& [target, q] : trans)
      if (!(target == mass_states[i]))
        jump_law[i][mass_index.at(target)] = q / out_rate;
  }

  auto law = enumerate_law(crp, all_states(window, 3));
  Rng rng(4242);
  Simulator sim(crp, law.states[law.cum.sample(rng)]);
  const int target_jumps = 100000;
  std::vector<std::map<std::size_t, std::uint64_t>> obs(mass_states.size());
  std::vector<std::uint64_t> visits(mass_states.size(), 0);
  auto prev = ZeroRangeKernel::project(sim.state());
  int jumps_seen = 0;
  while (jumps_seen < target_jumps) {
    REQUIRE(sim.step(rng));
    auto cur = ZeroRangeKernel::project(sim.state());
    if (cur == prev) continue;
    std::size_t src = mass_index.at(prev);
    ++obs[src][mass_index.at(cur)];
    ++visits[src];
    prev = std::move(cur);
    ++jumps_seen;
  }

  for (std::size_t i = 0; i < mass_states.size(); ++i) {
    if (visits[i] == 0) continue;
    double n_i = static_cast<double>(visits[i]);
    for (const auto& [dst, p] : jump_law[i]) {
      auto it = obs[i].find(dst);
      double o = it == obs[i].end() ? 0.0 : static_cast<double>(it->second);
      double sd = std::sqrt(n_i * p * (1.0 - p));
      INFO("source " << i << " dest " << dst);
      REQUIRE(std::abs(o - n_i * p) <= 4.0 * std::max(sd, 1.0));
    }
    // no mass jump outside the zero-range support
    for (const auto& [dst, cnt] : obs[i]) REQUIRE(jump_law[i].count(dst) == 1);
  }
}

// ---------------------------------------------------------------------------
// trajectory recording

TEST_CASE("empty systems produce a single-epoch record", "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(1.0, lat, JumpKernel::equilibrium(*lat, window));
  RecordSpec spec;
  spec.sample_dt = 0.5;
  Rng rng(7);
  auto rec = simulate(k, SpatialPartitionState(), 10.0, spec, rng);
  REQUIRE(rec.epochs.size() == 1);
  REQUIRE(rec.epochs[0].t == 0.0);
  REQUIRE(rec.epochs[0].n == 0);
  REQUIRE_FALSE(rec.truncated);
  REQUIRE(rec.events == 0);
}

TEST_CASE("event budgets truncate the record", "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(1.0, lat, JumpKernel::equilibrium(*lat, window));
  SpatialPartitionState s0;
  s0.add_part(window[0], 3);
  RecordSpec spec;
  spec.sample_dt = 1e9;
  spec.max_events = 50;
  Rng rng(8);
  auto rec = simulate(k, s0, 1e12, spec, rng);
  REQUIRE(rec.truncated);
  REQUIRE(rec.events == 50);
}

TEST_CASE("records conserve total mass and export as csv", "[dynamics]") {
  auto lat = box1d(3.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(1.0, lat, JumpKernel::equilibrium(*lat, window));
  SpatialPartitionState s0;
  s0.add_part(window[0], 4);
  RecordSpec spec;
  spec.sample_dt = 0.5;
  spec.r_max = 4;
  Rng rng(9);
  auto rec = simulate(k, s0, 30.0, spec, rng);
  REQUIRE(rec.epochs.size() == 61);
  for (const auto& e : rec.epochs) {
    REQUIRE(e.n == 4);
    std::uint64_t from_r = 0;
    for (std::size_t j = 0; j < e.r.size(); ++j)
      from_r += (j + 1) * e.r[j];
    REQUIRE(from_r == 4);
    REQUIRE(e.max_component <= e.max_site_mass);
    REQUIRE(e.origin_mass <= e.n);
  }
  REQUIRE(rec.final_state.total() == 4);

  auto csv = rec.to_csv();
  auto first_line = csv.substr(0, csv.find('\n'));
  REQUIRE(first_line ==
          "t,n,origin_mass,max_site_mass,max_component,num_components,"
          "r_1,r_2,r_3,r_4");
  std::size_t rows = 0;
  for (char ch : csv)
    if (ch == '\n') ++rows;
  REQUIRE(rows == rec.epochs.size() + 1);
}

TEST_CASE("mass trajectories collapse repeated configurations", "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(1.0, lat, JumpKernel::equilibrium(*lat, window));
  SpatialPartitionState s0;
  s0.add_part(window[0], 3);

  RecordSpec no_masses;
  no_masses.sample_dt = 0.0;
  Rng rng(10);
  auto rec = simulate(k, s0, 50.0, no_masses, rng);
  REQUIRE_THROWS_AS(zero_range_projection(rec), std::invalid_argument);

  RecordSpec spec;
  spec.sample_dt = 0.0;  // snapshot per event
  spec.keep_masses = true;
  Rng rng2(10);
  auto rec2 = simulate(k, s0, 50.0, spec, rng2);
  REQUIRE(rec2.epochs.size() == rec2.events + 1);
  auto traj = zero_range_projection(rec2);
  REQUIRE(traj.size() >= 2);
  REQUIRE(traj.size() <= rec2.epochs.size());
  for (std::size_t i = 1; i < traj.size(); ++i) {
    REQUIRE(traj[i].first > traj[i - 1].first);
    REQUIRE_FALSE(traj[i].second == traj[i - 1].second);
    std::uint64_t tot = 0;
    for (const auto& [x, m] : traj[i].second) tot += m;
    REQUIRE(tot == 3);
  }
}

TEST_CASE("time averages of site masses match the exact mass law",
          "[dynamics]") {
  // flat weights make every mass split equally likely, a sharp target for
  // the epoch histogram of a single long run
  auto lat = box1d(3.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(1.0, lat, JumpKernel::equilibrium(*lat, window));
  auto mass_states = all_mass_states(window, 4);
  REQUIRE(mass_states.size() == 15);
  {
    auto law = enumerate_law(k, all_states(window, 4));
    std::map<SpatialPartitionState, double> mass_marginal;
    for (std::size_t i = 0; i < law.states.size(); ++i)
      mass_marginal[ZeroRangeKernel::project(law.states[i])] += law.probs[i];
    for (const auto& m : mass_states)
      REQUIRE(mass_marginal.at(m) == Catch::Approx(1.0 / 15.0).epsilon(1e-10));
  }

  SpatialPartitionState s0;
  s0.add_part(window[0], 4);
  RecordSpec spec;
  spec.sample_dt = 0.25;
  spec.keep_masses = true;
  Rng rng(11);
  auto rec = simulate(k, s0, 20000.0, spec, rng);
  std::map<SpatialPartitionState, double> emp;
  double total = 0.0;
  for (const auto& e : rec.epochs) {
    SpatialPartitionState m;
    for (const auto& [x, v] : *e.masses)
      if (v > 0) m.add_part(x, v);
    emp[m] += 1.0;
    total += 1.0;
  }
  for (auto& [s, v] : emp) v /= total;
  std::map<SpatialPartitionState, double> exact;
  for (const auto& m : mass_states) exact[m] = 1.0 / 15.0;
  REQUIRE(total_variation(emp, exact) < 0.03);
}

TEST_CASE("laws from different initial states merge as the horizon grows",
          "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(1.5, lat, JumpKernel::equilibrium(*lat, window));
  const std::uint64_t n = 4;
  auto origin = initial_state(InitialStateKind::kAllAtOrigin, n, window);
  auto spread = initial_state(InitialStateKind::kAllSingletons, n, window);
  REQUIRE(origin.max_component() == n);
  REQUIRE(spread.max_component() == 1);
  REQUIRE(spread.num_occupied_sites() == window.size());

  auto empirical = [&](const SpatialPartitionState& s0, double T,
                       std::uint64_t salt) {
    std::map<SpatialPartitionState, double> law;
    Rng rng(1000 + salt);
    const int reps = 4000;
    for (int i = 0; i < reps; ++i)
      law[state_at(k, s0, T, rng)] += 1.0 / reps;
    return law;
  };

  double tv_short = total_variation(empirical(origin, 0.15, 1),
                                    empirical(spread, 0.15, 2));
  double tv_long = total_variation(empirical(origin, 30.0, 3),
                                   empirical(spread, 30.0, 4));
  REQUIRE(tv_short > 0.5);
  REQUIRE(tv_long < 0.1);
  REQUIRE(tv_long < tv_short - 0.3);
}

// ---------------------------------------------------------------------------
// exact chain verification and effective rates

TEST_CASE("balance checker rejects states outside the enumeration",
          "[dynamics]") {
  auto lat = box1d(2.0);
  auto window = lat->window_sites(0.5);
  ElementMoveKernel k(1.0, lat, JumpKernel::equilibrium(*lat, window));
  auto states = all_states(window, 3);
  states.pop_back();
  REQUIRE_THROWS_AS(check_detailed_balance(k, states), std::logic_error);
}

TEST_CASE("effective mass hop rate has the closed constant-weights form",
          "[dynamics]") {
  const double theta = 2.5;
  HTable h = HTable::from_weights(WeightSequence::constant(theta), 12);
  for (std::uint64_t eta = 1; eta <= 10; ++eta) {
    double want = theta * static_cast<double>(eta) /
                  (theta + static_cast<double>(eta) - 1.0);
    REQUIRE(effective_mass_hop_rate(h, eta, 1.0) ==
            Catch::Approx(want).epsilon(1e-12));
  }
  // a lone element always hops at the bare jump rate
  HTable h2 = HTable::from_weights(WeightSequence::algebraic(-2.0), 6);
  REQUIRE(effective_mass_hop_rate(h2, 1, 1.0) == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(effective_mass_hop_rate(h2, 0, 1.0) == 0.0);
}

TEST_CASE("placement overlap is uniform on flat boxes", "[dynamics]") {
  auto lat = std::make_shared<LatticeWeights>(Potential::square(), 2, 3.0);
  for (std::uint64_t j = 1; j <= 5; ++j)
    REQUIRE(placement_overlap(*lat, j) == Catch::Approx(1.0 / 9.0).epsilon(1e-12));
  REQUIRE(effective_coag_rate(*lat, 2.0, 3, 4, 5) ==
          Catch::Approx(2.0 * 4.0 * 5.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("placement overlap matches the site sum in a trap", "[dynamics]") {
  // sum_x p_{x,1} p_{x,j} collapses to c_{j+1} / (c_1 c_j) because the
  // placement weights multiply across sizes
  auto lat = std::make_shared<LatticeWeights>(Potential::power(2.0), 1, 6.0);
  auto window = lat->window_sites(1e-12);
  for (std::uint64_t j = 2; j <= 4; ++j) {
    double brute = 0.0;
    for (const auto& x : window) {
      double p1 = lat->site_weight(1.0, x) / lat->c(1);
      double pj = lat->site_weight(static_cast<double>(j), x) / lat->c(j);
      brute += p1 * pj;
    }
    REQUIRE(placement_overlap(*lat, j) == Catch::Approx(brute).epsilon(1e-9));
  }
}
