#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gmt/bigpieces.hpp"
#include "gmt/fixtures.hpp"

using namespace gmt;

namespace {

double brute_dist(const double* x, const WeightedSet& to) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < to.size(); ++j) best = std::min(best, to.metric().distance(x, to.point(j)));
  return best;
}

// mu(Q ∩ Gamma) with "on Gamma" meaning within delta of some Gamma sample, by exhaustive scan.
double brute_cube_mass(const DyadicTree& t, int c, const WeightedSet& gamma, double delta) {
  double m = 0.0;
  for (int p : t.cube(c).members)
    if (brute_dist(t.space.point(static_cast<std::size_t>(p)), gamma) <= delta) m += t.space.weight(static_cast<std::size_t>(p));
  return m;
}

struct Fixture {
  WeightedSet E;
  ApproximantCatalog catalog;
  DyadicTree tree;
  CoronaDecomposition corona;
};

Fixture make_fixture(WeightedSet E, std::vector<WeightedSet> members, double eta = 0.1) {
  Fixture f{E, ApproximantCatalog::build(std::move(members)), build_tree(E), {}};
  f.corona = build_corona(f.tree, f.catalog, eta, 2.0);
  return f;
}

// Point indices of the two halves of a plane patch, split at y = 1/2.
WeightedSet half_of(const WeightedSet& E, bool upper) {
  std::vector<double> coords;
  std::vector<double> weights;
  for (std::size_t i = 0; i < E.size(); ++i) {
    const double* p = E.point(i);
    if ((p[1] >= 0.5) != upper) continue;
    coords.insert(coords.end(), p, p + E.dim());
    weights.push_back(E.weight(i));
  }
  return WeightedSet(E.metric(), coords, weights, E.d(), E.r_min(), E.r_max());
}

}  // namespace

TEST(BpCheck, MemberOfCatalogWitnessesEveryCube) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const WeightedSet E = lipschitz_graph(1, 0.5, spec, 11);
  const DyadicTree t = build_tree(E);
  const BPCheckResult r = bp_check(t, {E}, 1.0);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.min_theta, 1.0);
  ASSERT_EQ(r.witnesses.size(), t.cubes.size());
  for (const BPWitness& w : r.witnesses) EXPECT_EQ(w.theta, 1.0);
}

TEST(BpCheck, UpperHalfCatalogSplitsCubes) {
  SampleSpec spec{1.0, 1.0 / 32, 0.0, 0.0};
  const WeightedSet E = flat_cloud(3, 2, spec);
  const WeightedSet upper = half_of(E, true);
  const DyadicTree t = build_tree(E);
  const double delta = matching_radius(E);
  const BPCheckResult r = bp_check(t, {upper}, 0.1);
  EXPECT_FALSE(r.ok);
  int inside = 0, below = 0;
  for (const BPWitness& w : r.witnesses) {
    const double want = brute_cube_mass(t, w.cube, upper, delta);
    EXPECT_NEAR(w.intersection_mass, want, 1e-12);
    double lo = 1e9, hi = -1e9;
    for (int p : t.cube(w.cube).members) {
      lo = std::min(lo, E.point(static_cast<std::size_t>(p))[1]);
      hi = std::max(hi, E.point(static_cast<std::size_t>(p))[1]);
    }
    if (lo >= 0.5) {
      EXPECT_EQ(w.theta, 1.0);
      ++inside;
    }
    if (hi < 0.5 - delta) {
      EXPECT_EQ(w.theta, 0.0);
      ++below;
    }
  }
  EXPECT_GT(inside, 0);
  EXPECT_GT(below, 0);
  EXPECT_LT(r.min_theta, 0.1);
  EXPECT_GE(r.failing_cube, 0);
}

// Cubes to balls and back, with the constants from the containment arguments.
TEST(BpCheck, CubeAndBallVersionsAgreeUpToConstants) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const WeightedSet E = staircase(0.3, 4, spec);
  const std::vector<WeightedSet> cat = staircase_facet_lines(0.3, 4, spec, 0.25);
  const DyadicTree t = build_tree(E);
  const double C = regularity_check(E).constant_C;
  const double d = E.d();
  const double cube_theta = bp_check(t, cat, 0.0).min_theta;
  ASSERT_GT(cube_theta, 0.0);

  // A ball B(x, r) contains the cube of x with 2 C1 l <= r, whose mass is at least (a0 l)^d / C.
  const double lo = DyadicTree::length_at(t.k_max), hi = DyadicTree::length_at(t.k_min);
  int probes = 0;
  for (std::size_t x = 0; x < E.size(); x += 37)
    for (double r = 4 * t.C1 * lo; r <= 2 * t.C1 * hi; r *= 1.5) {
      const int k = static_cast<int>(std::ceil(-std::log2(r / (2 * t.C1))));
      if (k > t.k_max || k < t.k_min || t.a0 * DyadicTree::length_at(k) < E.r_min()) continue;
      const double l = DyadicTree::length_at(k);
      const double bound = cube_theta * std::pow(t.a0 * l, d) / C / std::pow(r, d);
      const BallBPResult b = bp_ball_check(E, cat, {static_cast<int>(x)}, {r});
      EXPECT_GE(b.min_theta, bound * (1 - 1e-9)) << "x " << x << " r " << r;
      ++probes;
    }
  EXPECT_GT(probes, 20);

  // Q holds B(x_Q, a0 l) ∩ E, and mu(Q) <= C (C1 l)^d.
  for (const Cube& q : t.cubes) {
    const double l = t.length(q.id);
    if (t.a0 * l < E.r_min() || t.C1 * l > E.r_max()) continue;
    const double ball = bp_ball_check(E, cat, {q.center}, {t.a0 * l}).min_theta;
    const double bound = ball * std::pow(t.a0 / t.C1, d) / C;
    const double got = bp_check(t, cat, 0.0).witnesses[static_cast<std::size_t>(q.id)].theta;
    EXPECT_GE(got, bound * (1 - 1e-9)) << "cube " << q.id;
  }
}

TEST(LocalizeGraph, SelfApproximationContainmentAndDiameter) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const Fixture f = make_fixture(staircase(0.3, 4, spec), staircase_facet_lines(0.3, 4, spec, 0.25));
  const double C0 = default_C0(f.corona.eta, f.corona.K, f.tree.C1);
  int checked = 0;
  for (const StoppingRegime& S : f.corona.regimes) {
    const WeightedSet& gamma = f.catalog.sets[static_cast<std::size_t>(S.approximant)];
    const double C = regularity_check(gamma).constant_C;
    const double gamma_diam = diameter(gamma);
    for (int c : S.cubes) {
      const LocalizedGraph g = localize_graph(gamma, f.tree, c, S, C0, f.corona.eta, f.corona.K);
      const double l = f.tree.length(c);
      const double* xq = f.tree.space.point(static_cast<std::size_t>(f.tree.cube(c).center));
      for (std::size_t i = 0; i < g.set.size(); ++i)
        EXPECT_LE(g.set.metric().distance(xq, g.set.point(i)), 5 * C0 * l);
      EXPECT_LT(g.still_close_ratio, 1.0);
      if (C0 * l <= gamma_diam) {
        EXPECT_GE(diameter(g.set), std::pow(C, -2.0 / gamma.d()) * C0 * l / 2);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 0);

  // The set itself as approximant: zero proximity.
  const WeightedSet line = flat_cloud(2, 1, spec);
  const Fixture g = make_fixture(line, {line});
  const StoppingRegime& S = g.corona.regimes.front();
  for (int c : S.cubes) {
    const LocalizedGraph lg = localize_graph(line, g.tree, c, S, C0, 0.1, 2.0);
    EXPECT_EQ(lg.still_close_ratio, 0.0);
    EXPECT_EQ(lg.anchor, g.tree.cube(c).center);
  }
}

TEST(NestedChain, MatchesExhaustiveRegimeScan) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const Fixture f = make_fixture(staircase(0.3, 8, spec), staircase_facet_lines(0.3, 8, spec, 0.25));
  auto regime_of = [&](int c) {
    for (const StoppingRegime& S : f.corona.regimes)
      if (std::find(S.cubes.begin(), S.cubes.end(), c) != S.cubes.end()) return S.id;
    return -1;
  };
  int trues = 0, falses = 0;
  for (const StoppingRegime& S : f.corona.regimes) {
    const int q0 = S.maximal;
    const WeightedSet& gamma = f.catalog.sets[static_cast<std::size_t>(S.approximant)];
    for (int x : f.tree.cube(q0).members) {
      bool want = true;
      for (int k = f.tree.cube(q0).level; k <= f.tree.k_max; ++k) want = want && regime_of(f.tree.cube_of(x, k)) == S.id;
      const bool got = nested_chain_membership(f.corona, x, q0);
      ASSERT_EQ(got, want) << "point " << x << " cube " << q0;
      if (got) {
        // x lies in the finest cube of the chain, which is eta-close to the approximant.
        const double finest = DyadicTree::length_at(f.tree.k_max);
        EXPECT_LT(brute_dist(f.E.point(static_cast<std::size_t>(x)), gamma), f.corona.eta * finest);
        ++trues;
      } else {
        ++falses;
      }
    }
  }
  // Chains starting at a bad cube never stay in one regime.
  for (int q0 : f.corona.bad)
    for (int x : f.tree.cube(q0).members) {
      EXPECT_FALSE(nested_chain_membership(f.corona, x, q0));
      ++falses;
    }
  EXPECT_GT(trues, 0);
  EXPECT_GT(falses, 0);

  const WeightedSet line = flat_cloud(2, 1, spec);
  const Fixture one = make_fixture(line, {line});
  const int root = one.tree.roots().front();
  for (std::size_t x = 0; x < line.size(); ++x) EXPECT_TRUE(nested_chain_membership(one.corona, static_cast<int>(x), root));
}

TEST(SawtoothRegime, EmptyFamilyBoundaryFamilyAndInjectedFault) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const WeightedSet line = flat_cloud(2, 1, spec);
  const Fixture one = make_fixture(line, {line});
  const DiscreteMeasure m1 = corona_measure(one.corona);
  const int child = one.tree.cube(one.tree.roots().front()).children.front();
  EXPECT_EQ(regime_of_sawtooth(one.corona, m1, child, {}), 0);

  const Fixture f = make_fixture(staircase(0.3, 8, spec), staircase_facet_lines(0.3, 8, spec, 0.25));
  const DiscreteMeasure m = corona_measure(f.corona);
  const std::vector<int> owner = f.corona.cube_regime();
  int tested = 0;
  for (const StoppingRegime& S : f.corona.regimes) {
    for (int q0 : f.tree.cube(S.maximal).children) {
      if (owner[static_cast<std::size_t>(q0)] != S.id) continue;
      // Boundary family: maximal cubes below q0 lying outside the regime.
      std::vector<int> family;
      for (int c : f.tree.subtree(q0)) {
        const int p = f.tree.cube(c).parent;
        if (owner[static_cast<std::size_t>(c)] != S.id && owner[static_cast<std::size_t>(p)] == S.id) family.push_back(c);
      }
      EXPECT_EQ(regime_of_sawtooth(f.corona, m, q0, family), S.id);
      const std::vector<int> saw = sawtooth(f.tree, q0, family);
      for (int c : saw) EXPECT_EQ(owner[static_cast<std::size_t>(c)], S.id);
      ++tested;

      // Split one sawtooth cube off into a new regime while keeping the measure.
      int victim = -1;
      for (int c : saw)
        if (c != q0) victim = c;
      if (victim < 0) continue;
      CoronaDecomposition broken = f.corona;
      auto& cubes = broken.regimes[static_cast<std::size_t>(S.id)].cubes;
      cubes.erase(std::find(cubes.begin(), cubes.end(), victim));
      broken.regimes.push_back(StoppingRegime{static_cast<int>(broken.regimes.size()), {victim}, victim, S.approximant});
      try {
        regime_of_sawtooth(broken, m, q0, family);
        ADD_FAILURE() << "corrupted decomposition accepted";
      } catch (const SawtoothRegimeError& e) {
        EXPECT_EQ(e.witness(), victim);
      }
    }
  }
  EXPECT_GT(tested, 0);
}

TEST(SeparatedSubfamily, SingleAlreadySeparatedAndEverySixth) {
  const int count = 1 << 10;
  const double h = 1.0 / count;
  std::vector<double> coords;
  for (int j = 0; j < count; ++j) coords.push_back(j * h);
  TreeOptions opts;
  opts.mode = TreeMode::chained;
  opts.k_min = 0;
  opts.k_max = 8;
  const DyadicTree t = build_tree(make_cloud(Metric::euclidean(1), coords, h, 1.0, 2 * h, 1.0), opts);
  std::vector<int> level = t.level_cubes(6);
  std::sort(level.begin(), level.end(), [&](int a, int b) { return t.cube(a).members.front() < t.cube(b).members.front(); });
  ASSERT_EQ(level.size(), 64u);

  const SeparatedFamily one = separated_subfamily(t, {level[5]}, 5.0);
  EXPECT_EQ(one.selected, std::vector<int>{level[5]});
  EXPECT_EQ(one.retained_fraction, 1.0);

  std::vector<int> spread;
  for (std::size_t i = 0; i < level.size(); i += 8) spread.push_back(level[i]);
  std::vector<int> got = separated_subfamily(t, spread, 5.0).selected, want = spread;
  std::sort(want.begin(), want.end());
  EXPECT_EQ(got, want);

  // Equal cubes of length l side by side: cube j + 5 sits 4 l + h away, cube j + 6 sits 5 l + h away.
  const std::vector<int> first(level.begin(), level.begin() + 48);
  const SeparatedFamily sixth = separated_subfamily(t, first, 5.0);
  want.clear();
  for (std::size_t i = 0; i < first.size(); i += 6) want.push_back(first[i]);
  std::sort(want.begin(), want.end());
  EXPECT_EQ(sixth.selected, want);
  EXPECT_NEAR(sixth.retained_fraction, 1.0 / 6.0, 1e-12);
}

TEST(CoronaToBp2, TrivialCoronaHasFullMass) {
  SampleSpec spec{1.0, 1.0 / 512, 0.0, 0.0};
  const WeightedSet line = flat_cloud(2, 1, spec);
  const Fixture f = make_fixture(line, {line});
  const Bp2Certificate cert = corona_to_bp2(f.tree, f.corona, f.catalog);
  ASSERT_TRUE(cert.ok);
  EXPECT_EQ(cert.b, 1.0 / (4 * kExtrapolationConstant));
  EXPECT_LE(kExtrapolationConstant * cert.b, 0.5);
  for (const CubeCertificate& c : cert.cubes) {
    EXPECT_NEAR(c.c_mass, 1.0, 1e-12) << "cube " << c.cube;
    EXPECT_TRUE(c.ok);
  }
  EXPECT_NEAR(cert.theta_prime, 1.0, 1e-12);
}

TEST(CoronaToBp2, LadderRungsRecomputed) {
  SampleSpec spec{1.0, 1.0 / 512, 0.0, 0.0};
  const Fixture f = make_fixture(two_planes(2, 1, spec, 0.5), {flat_cloud(2, 1, spec, 0.0), flat_cloud(2, 1, spec, 0.5)});
  const Bp2Certificate cert = corona_to_bp2(f.tree, f.corona, f.catalog);
  ASSERT_TRUE(cert.ok) << (cert.failures.empty() ? "" : cert.failures.front());
  EXPECT_GT(cert.theta_prime, 0.0);
  // Ladder a_i = i b up to the packing constant; gamma_a = 1 - (a + b)/(a + 2b) stays positive.
  const int steps = static_cast<int>(std::ceil(f.corona.packing_constant / cert.b - 1e-12));
  ASSERT_EQ(cert.ladder.size(), static_cast<std::size_t>(steps + 1));
  for (std::size_t i = 0; i < cert.ladder.size(); ++i) {
    EXPECT_NEAR(cert.ladder[i], static_cast<double>(i) * cert.b, 1e-15);
    EXPECT_GT(1 - (cert.ladder[i] + cert.b) / (cert.ladder[i] + 2 * cert.b), 0.0);
  }
  // Rung of a cube: smallest a_i with m(D_Q) <= a_i mu(Q), m charging maximal and bad cubes.
  std::set<int> charged(f.corona.bad.begin(), f.corona.bad.end());
  for (const StoppingRegime& S : f.corona.regimes) charged.insert(S.maximal);
  for (const CubeCertificate& c : cert.cubes) {
    if (!c.star) continue;
    double mass = 0.0;
    for (int r : f.tree.subtree(c.cube))
      if (charged.count(r)) mass += f.tree.cube(r).mass;
    const double ratio = mass / f.tree.cube(c.cube).mass;
    int want = 0;
    while (static_cast<std::size_t>(want) + 1 < cert.ladder.size() && cert.ladder[static_cast<std::size_t>(want)] < ratio * (1 - 1e-9))
      ++want;
    EXPECT_EQ(c.rung, want) << "cube " << c.cube;
  }
  // Constants only get worse up the ladder.
  for (std::size_t i = 1; i < cert.rungs.size(); ++i) {
    EXPECT_LE(cert.rungs[i].c_mass, cert.rungs[i - 1].c_mass + 1e-15);
    EXPECT_LE(cert.rungs[i].theta, cert.rungs[i - 1].theta + 1e-15);
    EXPECT_GE(cert.rungs[i].C_reg, cert.rungs[i - 1].C_reg - 1e-15);
  }
}

TEST(CoronaToBp2, StaircaseAndCombExerciseAllCases) {
  SampleSpec spec{1.0, 1.0 / 1024, 0.0, 0.0};
  const Fixture stairs = make_fixture(staircase(0.3, 8, spec), staircase_facet_lines(0.3, 8, spec, 0.25));
  const Bp2Certificate a = corona_to_bp2(stairs.tree, stairs.corona, stairs.catalog);
  ASSERT_TRUE(a.ok);
  for (const CubeCertificate& c : a.cubes) {
    EXPECT_GT(c.theta, 0.0);
    EXPECT_GT(c.c_mass, 0.0);
    EXPECT_GT(c.c_diam, 0.0);
  }
  std::set<std::string> cases;
  for (int teeth : {1, 2, 4}) {
    const Fixture comb = make_fixture(tent_comb(teeth, 1.0 / 64, 0.5, spec), tent_comb_lines(teeth, 1.0 / 64, 0.5, spec, 0.25));
    const Bp2Certificate c = corona_to_bp2(comb.tree, comb.corona, comb.catalog);
    EXPECT_TRUE(c.ok) << teeth << " teeth";
    for (const CubeCertificate& r : c.cubes) {
      cases.insert(r.case_label);
      if (r.case_label == "case2b") {
        EXPECT_LE(r.t1_max_terms, 1);
        EXPECT_FALSE(r.separated.empty());
      }
    }
  }
  for (const char* label : {"case1", "case2a", "case2b"}) EXPECT_TRUE(cases.count(label)) << label;
}

TEST(CoronaToBp2, FailFastReportsCube) {
  SampleSpec spec{1.0, 1.0 / 1024, 0.0, 0.0};
  const Fixture f = make_fixture(tent_comb(2, 1.0 / 64, 0.5, spec), tent_comb_lines(2, 1.0 / 64, 0.5, spec, 0.25));
  Bp2Options opts;
  opts.C0 = 0.05;  // far below what the localization needs
  opts.fail_fast = true;
  try {
    corona_to_bp2(f.tree, f.corona, f.catalog, opts);
    ADD_FAILURE() << "undersized C0 accepted";
  } catch (const Bp2Failure& e) {
    EXPECT_GE(e.cube(), 0);
  }
  opts.fail_fast = false;
  const Bp2Certificate cert = corona_to_bp2(f.tree, f.corona, f.catalog, opts);
  EXPECT_FALSE(cert.ok);
  EXPECT_FALSE(cert.failures.empty());
}
