#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "gmt/carleson.hpp"
#include "gmt/fixtures.hpp"

using namespace gmt;

namespace {

DyadicTree line_tree(double spacing) {
  SampleSpec spec{1.0, spacing, 0.0, 0.0};
  return build_tree(flat_cloud(2, 1, spec));
}

bool inside_family(const DyadicTree& t, const std::vector<int>& family, int c) {
  for (int f : family)
    if (t.contains(f, c)) return true;
  return false;
}

// sup over Q in the range of (sum of alpha over Q' inside Q, outside F) / mu(Q), by double loop.
double oracle_norm(const DiscreteMeasure& m, const std::vector<int>& family, int q0) {
  const DyadicTree& t = *m.tree;
  double total = 0.0;
  for (const Cube& c : t.cubes)
    if (c.level == t.k_min) total += c.mass;
  double best = 0.0;
  for (const Cube& q : t.cubes) {
    if (q0 != kGlobal && !t.contains(q0, q.id)) continue;
    if (q.mass < 1e-12 * total) continue;
    double sum = 0.0;
    for (const Cube& r : t.cubes)
      if (t.contains(q.id, r.id) && !inside_family(t, family, r.id)) sum += m.alpha[static_cast<std::size_t>(r.id)];
    best = std::max(best, sum / q.mass);
  }
  return best;
}

double oracle_packing(const DyadicTree& t, const std::vector<int>& marked) {
  double worst = 0.0;
  for (const Cube& q : t.cubes) {
    double sum = 0.0;
    for (int r : marked)
      if (t.contains(q.id, r)) sum += t.cube(r).mass;
    worst = std::max(worst, sum / q.mass);
  }
  return worst;
}

double subtree_alpha(const DiscreteMeasure& m, int q) {
  double s = 0.0;
  for (int c : m.tree->subtree(q)) s += m.alpha[static_cast<std::size_t>(c)];
  return s;
}

}  // namespace

TEST(MeasureOf, EmptyChainAndRandom) {
  const DyadicTree t = line_tree(1.0 / 512);
  std::vector<double> alpha(t.cubes.size());
  for (const Cube& c : t.cubes) alpha[static_cast<std::size_t>(c.id)] = c.mass;
  const DiscreteMeasure mu(t, alpha);
  EXPECT_EQ(measure_of(mu, {}), 0.0);
  const int root = t.roots().front();
  // Every level partitions the root, so each level contributes mu(root).
  EXPECT_NEAR(measure_of(mu, t.subtree(root)), t.num_levels() * t.cube(root).mass, 1e-12);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& a : alpha) a = u(rng);
  const DiscreteMeasure m(t, alpha);
  std::vector<int> pick;
  double want = 0.0;
  for (const Cube& c : t.cubes)
    if (c.id % 3 == 0) pick.push_back(c.id), want += alpha[static_cast<std::size_t>(c.id)];
  EXPECT_NEAR(measure_of(m, pick), want, 1e-12);
  std::vector<int> other;
  for (const Cube& c : t.cubes)
    if (c.id % 3 != 0) other.push_back(c.id);
  std::vector<int> all(t.cubes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  EXPECT_NEAR(measure_of(m, pick) + measure_of(m, other), measure_of(m, all), 1e-12);
  std::vector<int> dup = pick;
  dup.insert(dup.end(), pick.begin(), pick.end());
  EXPECT_NEAR(measure_of(m, dup), want, 1e-12);
}

TEST(CarlesonNorm, ClosedFormCases) {
  const DyadicTree t = line_tree(1.0 / 512);
  EXPECT_EQ(carleson_norm(DiscreteMeasure::zero(t), {}).value, 0.0);
  std::vector<double> leaves(t.cubes.size(), 0.0), every(t.cubes.size(), 0.0);
  for (const Cube& c : t.cubes) {
    if (c.level == t.k_max) leaves[static_cast<std::size_t>(c.id)] = c.mass;
    every[static_cast<std::size_t>(c.id)] = c.mass;
  }
  EXPECT_NEAR(carleson_norm(DiscreteMeasure(t, leaves), {}).value, 1.0, 1e-12);
  EXPECT_NEAR(carleson_norm(DiscreteMeasure(t, every), {}).value, t.num_levels(), 1e-12);
}

TEST(CarlesonNorm, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const std::vector<DyadicTree> trees = {line_tree(1.0 / 512), build_tree(lipschitz_graph(1, 0.8, spec, 6)),
                                         build_tree(two_planes(2, 1, spec, 0.3))};
  for (const DyadicTree& t : trees) {
    ASSERT_LE(t.num_levels(), 7);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> alpha(t.cubes.size());
      for (const Cube& c : t.cubes) alpha[static_cast<std::size_t>(c.id)] = u(rng) < 0.5 ? 0.0 : u(rng) * c.mass;
      const DiscreteMeasure m(t, alpha);
      // Random disjoint family: pick cubes top-down, skipping descendants of chosen ones.
      std::vector<int> family;
      for (const Cube& c : t.cubes)
        if (u(rng) < 0.05 && !inside_family(t, family, c.id)) {
          bool covers = false;
          for (int f : family) covers = covers || t.contains(c.id, f);
          if (!covers) family.push_back(c.id);
        }
      EXPECT_NEAR(carleson_norm(m, family).value, oracle_norm(m, family, kGlobal), 1e-12);
      const int q0 = t.roots().front();
      std::vector<int> local;
      for (int f : family)
        if (t.contains(q0, f)) local.push_back(f);
      EXPECT_NEAR(carleson_norm(m, local, q0).value, oracle_norm(m, local, q0), 1e-12);
    }
  }
}

TEST(CarlesonNorm, LargerFamilyNeverIncreasesNorm) {
  const DyadicTree t = line_tree(1.0 / 512);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> alpha(t.cubes.size());
  for (const Cube& c : t.cubes) alpha[static_cast<std::size_t>(c.id)] = u(rng) * c.mass;
  const DiscreteMeasure m(t, alpha);
  std::vector<int> family;
  double last = carleson_norm(m, family).value;
  for (int c : t.level_cubes(t.k_min + 2)) {
    family.push_back(c);
    const double now = carleson_norm(m, family).value;
    EXPECT_LE(now, last + 1e-12);
    last = now;
  }
}

TEST(CarlesonNorm, RejectsOverlappingFamily) {
  const DyadicTree t = line_tree(1.0 / 256);
  const int root = t.roots().front();
  EXPECT_THROW(carleson_norm(DiscreteMeasure::zero(t), {root, t.cube(root).children.front()}), std::invalid_argument);
}

TEST(PackingCheck, ClosedFormsAndOracle) {
  const DyadicTree t = line_tree(1.0 / 512);
  EXPECT_EQ(packing_check(t, {}, 1.0).worst_ratio, 0.0);
  std::vector<int> level = t.level_cubes(t.k_max);
  EXPECT_NEAR(packing_check(t, level, 1.0).worst_ratio, 1.0, 1e-12);
  std::vector<int> all;
  for (const Cube& c : t.cubes) all.push_back(c.id);
  const PackingResult r = packing_check(t, all, t.num_levels() - 0.5);
  EXPECT_NEAR(r.worst_ratio, t.num_levels(), 1e-12);
  EXPECT_FALSE(r.ok);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> marked;
    for (const Cube& c : t.cubes)
      if (rng() % 4 == 0) marked.push_back(c.id);
    EXPECT_NEAR(packing_check(t, marked, 10).worst_ratio, oracle_packing(t, marked), 1e-12);
  }
}

TEST(Extrapolate, ZeroMeasure) {
  const DyadicTree t = line_tree(1.0 / 256);
  const ExtrapolationResult r = extrapolate(DiscreteMeasure::zero(t), t.roots().front(), 0.5, 0.25);
  EXPECT_TRUE(r.family.empty());
  EXPECT_EQ(r.sawtooth_norm, 0.0);
  EXPECT_EQ(r.bad_union_mass, 0.0);
}

TEST(Extrapolate, MassOnlyAtTop) {
  const DyadicTree t = line_tree(1.0 / 256);
  const int q = t.roots().front();
  for (auto [a, b] : {std::pair{0.1, 0.25}, std::pair{0.25, 0.25}, std::pair{1.0, 0.25}}) {
    std::vector<double> alpha(t.cubes.size(), 0.0);
    alpha[static_cast<std::size_t>(q)] = (a + b) * t.cube(q).mass;
    const DiscreteMeasure m(t, alpha);
    const ExtrapolationResult r = extrapolate(m, q, a, b);
    if (a <= b) {
      std::vector<int> fam = r.family, kids = t.cube(q).children;
      std::sort(fam.begin(), fam.end());
      std::sort(kids.begin(), kids.end());
      EXPECT_TRUE(fam.empty() || fam == kids);
    } else {
      EXPECT_EQ(r.family, std::vector<int>{q});
    }
    EXPECT_LE(r.sawtooth_norm, kExtrapolationConstant * b + 1e-12);
    EXPECT_LE(oracle_norm(m, r.family, q), kExtrapolationConstant * b + 1e-12);
    EXPECT_EQ(r.bad_union_mass, 0.0);
  }
}

TEST(Extrapolate, RejectsViolatedPrecondition) {
  const DyadicTree t = line_tree(1.0 / 256);
  const int q = t.roots().front();
  std::vector<double> alpha(t.cubes.size(), 0.0);
  alpha[static_cast<std::size_t>(q)] = 2.0 * t.cube(q).mass;
  EXPECT_THROW(extrapolate(DiscreteMeasure(t, alpha), q, 0.5, 0.5), std::invalid_argument);
  EXPECT_THROW(extrapolate(DiscreteMeasure::zero(t), q, 0.5, 0.0), std::invalid_argument);
}

// Both conclusions on random instances, recomputed by exhaustive summation.
TEST(Extrapolate, ContractOnRandomMeasures) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const std::vector<DyadicTree> trees = {line_tree(1.0 / 512), build_tree(lipschitz_graph(1, 0.5, spec, 2)),
                                         build_tree(staircase(0.4, 6, spec))};
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int instances = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const DyadicTree& t = trees[static_cast<std::size_t>(trial) % trees.size()];
    const int q = static_cast<int>(rng() % t.cubes.size());
    const double a = u(rng) * 2.0, b = 0.05 + u(rng);
    std::vector<double> alpha(t.cubes.size(), 0.0);
    for (int c : t.subtree(q)) alpha[static_cast<std::size_t>(c)] = u(rng) < 0.3 ? u(rng) * t.cube(c).mass : 0.0;
    DiscreteMeasure m(t, alpha);
    const double total = subtree_alpha(m, q);
    if (total > 0) {
      const double scale = (a + b) * t.cube(q).mass * u(rng) / total;
      for (double& x : m.alpha) x *= scale;
    }
    const ExtrapolationResult r = extrapolate(m, q, a, b);
    ++instances;
    ASSERT_LE(oracle_norm(m, r.family, q), kExtrapolationConstant * b * (1 + 1e-9) + 1e-15) << "trial " << trial;
    double bad = 0.0;
    for (int f : r.family)
      if (subtree_alpha(m, f) - m.alpha[static_cast<std::size_t>(f)] > a * t.cube(f).mass) bad += t.cube(f).mass;
    ASSERT_NEAR(bad, r.bad_union_mass, 1e-12);
    ASSERT_LE(bad, (a + b) / (a + 2 * b) * t.cube(q).mass * (1 + 1e-9)) << "trial " << trial;
    for (std::size_t i = 0; i < r.family.size(); ++i)
      for (std::size_t j = i + 1; j < r.family.size(); ++j) {
        ASSERT_FALSE(t.contains(r.family[i], r.family[j]));
        ASSERT_FALSE(t.contains(r.family[j], r.family[i]));
      }
  }
  EXPECT_EQ(instances, 1000);
}

TEST(AlphaCsv, RoundTrip) {
  const DyadicTree t = line_tree(1.0 / 128);
  std::vector<double> alpha(t.cubes.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = 0.1 * static_cast<double>(i) / 3.0;
  const auto path = std::filesystem::temp_directory_path() / "gmt_alpha.csv";
  write_alpha_csv(DiscreteMeasure(t, alpha), path.string());
  EXPECT_EQ(read_alpha_csv(t, path.string()).alpha, alpha);
}
