#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "gmt/dyadic.hpp"
#include "gmt/fixtures.hpp"

using namespace gmt;

namespace {

WeightedSet unit_interval(int log2_points) {
  const int count = 1 << log2_points;
  const double h = std::ldexp(1.0, -log2_points);
  std::vector<double> coords;
  for (int j = 0; j < count; ++j) coords.push_back(j * h);
  return make_cloud(Metric::euclidean(1), coords, h, 1.0, 2 * h, 1.0);
}

// Partition of point indices at level k, as a set of member lists.
std::set<std::vector<int>> level_partition(const DyadicTree& t, int k) {
  std::set<std::vector<int>> out;
  for (int c : t.level_cubes(k)) out.insert(t.cube(c).members);
  return out;
}

std::vector<int> brute_dilation(const DyadicTree& t, int c, double K) {
  const Cube& q = t.cube(c);
  const WeightedSet& s = t.space;
  double diam = 0.0;
  for (int a : q.members)
    for (int b : q.members) diam = std::max(diam, s.distance(a, b));
  std::vector<int> out;
  for (std::size_t x = 0; x < s.size(); ++x) {
    double dist = std::numeric_limits<double>::infinity();
    for (int m : q.members) dist = std::min(dist, s.distance(x, m));
    if (dist <= (K - 1) * diam) out.push_back(static_cast<int>(x));
  }
  return out;
}

}  // namespace

TEST(BuildTree, ChainedModeReproducesDyadicIntervals) {
  const WeightedSet s = unit_interval(10);
  TreeOptions opts;
  opts.mode = TreeMode::chained;
  opts.k_min = 0;
  opts.k_max = 8;
  const DyadicTree t = build_tree(s, opts);
  for (int k = 0; k <= 8; ++k) {
    std::set<std::vector<int>> want;
    const int width = 1 << (10 - k);
    for (int j = 0; j < (1 << k); ++j) {
      std::vector<int> v(static_cast<std::size_t>(width));
      for (int i = 0; i < width; ++i) v[static_cast<std::size_t>(i)] = j * width + i;
      want.insert(v);
    }
    EXPECT_EQ(level_partition(t, k), want) << "level " << k;
  }
}

TEST(BuildTree, SinglePointGivesChain) {
  const WeightedSet s = make_cloud(Metric::euclidean(2), {0.3, 0.7}, 1.0, 1.0, 0.01, 1.0);
  const DyadicTree t = build_tree(s);
  ASSERT_GE(t.num_levels(), 2);
  for (int k = t.k_min; k <= t.k_max; ++k) EXPECT_EQ(t.level_cubes(k).size(), 1u);
  for (const Cube& q : t.cubes) EXPECT_LE(q.children.size(), 1u);
  EXPECT_TRUE(validate_grid(t).ok);
}

TEST(BuildTree, DefaultLevelWindowFollowsScaleRange) {
  SampleSpec spec{1.0, 1.0 / 512, 0.0, 0.0};
  const WeightedSet s = flat_cloud(2, 1, spec);
  const DyadicTree t = build_tree(s);
  EXPECT_EQ(t.k_min, static_cast<int>(std::ceil(-std::log2(s.r_max()))));
  EXPECT_EQ(t.k_max, static_cast<int>(std::floor(-std::log2(4 * s.r_min()))));
}

TEST(ValidateGrid, LineSampleConstants) {
  const double h = 1.0 / 1024;
  SampleSpec spec{1.0, h, 0.0, 0.0};
  const DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  const GridReport r = validate_grid(t);
  ASSERT_TRUE(r.ok) << r.violation;
  EXPECT_GE(r.a0, 0.25);
  EXPECT_LE(r.C1, 2.0 + 2 * h / DyadicTree::length_at(t.k_max));
}

TEST(ValidateGrid, MovedPointBreaksNesting) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  // Move one point between two cubes of the finest level that have different parents.
  const int k = t.k_max;
  int from = -1, to = -1;
  for (int a : t.level_cubes(k))
    for (int b : t.level_cubes(k))
      if (from < 0 && t.cube(a).parent != t.cube(b).parent && t.cube(a).members.size() > 1) from = a, to = b;
  ASSERT_GE(from, 0);
  Cube& src = t.cubes[static_cast<std::size_t>(from)];
  const int p = src.members.back() == src.center ? src.members.front() : src.members.back();
  src.members.erase(std::find(src.members.begin(), src.members.end(), p));
  auto& dst = t.cubes[static_cast<std::size_t>(to)].members;
  dst.insert(std::lower_bound(dst.begin(), dst.end(), p), p);
  t.labels[static_cast<std::size_t>(k - t.k_min)][static_cast<std::size_t>(p)] = to;
  const GridReport r = validate_grid(t);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.property, "ii");
  EXPECT_EQ(r.witness_cube, to);
  EXPECT_EQ(r.witness_point, p);
}

TEST(ValidateGrid, ManyFixturesPass) {
  SampleSpec spec{1.0, 1.0 / 128, 0.0, 0.0};
  std::vector<WeightedSet> sets = {flat_cloud(2, 1, spec), flat_cloud(3, 2, SampleSpec{1.0, 1.0 / 32, 0.0, 0.0}),
                                   lipschitz_graph(1, 1.0, spec, 3), two_planes(2, 1, spec, 0.5),
                                   staircase(0.5, 4, spec)};
  for (const WeightedSet& s : sets) {
    const DyadicTree t = build_tree(s);
    const GridReport r = validate_grid(t);
    EXPECT_TRUE(r.ok) << r.violation;
    EXPECT_GT(r.a0, 0.0);
    EXPECT_LT(r.C1, 8.0);
  }
}

TEST(TreeProperties, MassBoundsAndAncestors) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const WeightedSet s = lipschitz_graph(1, 0.5, spec, 8);
  const double C = regularity_check(s).constant_C;
  const DyadicTree t = build_tree(s);
  const double d = s.d();
  for (const Cube& q : t.cubes) {
    double mass = 0.0;
    for (int p : q.members) mass += s.weight(static_cast<std::size_t>(p));
    EXPECT_NEAR(q.mass, mass, 1e-12);
    const double len = t.length(q.id);
    // Radii are clamped into the scale range, where the regularity bound is known.
    const double inner = std::clamp(t.a0 * len, s.r_min(), s.r_max());
    const double outer = std::clamp(t.C1 * len, s.r_min(), s.r_max());
    if (t.a0 * len >= s.r_min()) EXPECT_GE(q.mass, std::pow(inner, d) / C * (1 - 1e-9));
    if (t.C1 * len <= s.r_max()) EXPECT_LE(q.mass, C * std::pow(outer, d) * (1 + 1e-9));
    for (int k = t.k_min; k < q.level; ++k) {
      int containing = 0;
      for (int a : t.level_cubes(k))
        if (std::includes(t.cube(a).members.begin(), t.cube(a).members.end(), q.members.begin(), q.members.end()))
          ++containing;
      EXPECT_EQ(containing, 1);
      EXPECT_EQ(t.ancestor_at(q.id, k), t.cube_of(q.members.front(), k));
    }
  }
}

TEST(TreeProperties, Deterministic) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const WeightedSet s = lipschitz_graph(1, 0.7, spec, 1);
  const DyadicTree a = build_tree(s), b = build_tree(s);
  EXPECT_EQ(tree_to_jsonl(a), tree_to_jsonl(b));
  EXPECT_EQ(tree_members_csv(a), tree_members_csv(b));
}

TEST(Dilate, IdentityAndBruteForce) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  for (int c : t.level_cubes(t.k_min + 2)) {
    EXPECT_EQ(dilate(t, c, 1.0), t.cube(c).members);
    const std::vector<int> two = dilate(t, c, 2.0);
    EXPECT_EQ(two, brute_dilation(t, c, 2.0));
    const std::vector<int> three = dilate(t, c, 3.0);
    EXPECT_TRUE(std::includes(three.begin(), three.end(), two.begin(), two.end()));
  }
}

TEST(Dilate, UniformLineTriples) {
  SampleSpec spec{1.0, 1.0 / 1024, 0.0, 0.0};
  const DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  const int k = t.k_min + 4;
  int checked = 0;
  for (int c : t.level_cubes(k)) {
    const Cube& q = t.cube(c);
    const double lo = t.space.point(static_cast<std::size_t>(q.members.front()))[0];
    const double hi = t.space.point(static_cast<std::size_t>(q.members.back()))[0];
    if (lo - (hi - lo) < 0 || hi + (hi - lo) > 1) continue;  // interior cubes only
    // diam(Q) spans |Q| - 1 spacings, so each side gains |Q| - 1 samples.
    EXPECT_EQ(dilate(t, c, 2.0).size(), 3 * q.members.size() - 2);
    ++checked;
  }
  EXPECT_GE(checked, 4);
}

TEST(Dilate, IsolatedCubeStaysItself) {
  // Two tight clusters far apart relative to their size.
  std::vector<double> coords;
  for (int i = 0; i < 16; ++i) coords.push_back(i * 0.001), coords.push_back(0.0);
  for (int i = 0; i < 16; ++i) coords.push_back(10 + i * 0.001), coords.push_back(0.0);
  const WeightedSet s = make_cloud(Metric::euclidean(2), coords, 0.001, 1.0, 0.002, 20.0);
  TreeOptions opts;
  opts.k_min = -3;
  opts.k_max = 5;
  const DyadicTree t = build_tree(s, opts);
  for (int c : t.level_cubes(0)) EXPECT_EQ(dilate(t, c, 2.0), t.cube(c).members);
}

TEST(Sawtooth, BasicFamilies) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  const int q0 = t.roots().front();
  std::vector<int> all = t.subtree(q0);
  std::vector<int> got = sawtooth(t, q0, {});
  std::sort(all.begin(), all.end());
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, all);
  EXPECT_TRUE(sawtooth(t, q0, {q0}).empty());
  EXPECT_EQ(sawtooth(t, q0, t.cube(q0).children), std::vector<int>{q0});
  const int child = t.cube(q0).children.front();
  EXPECT_THROW(sawtooth(t, q0, {q0, child}), std::invalid_argument);
}

TEST(Export, JsonLinesHasOneLinePerCube) {
  SampleSpec spec{1.0, 1.0 / 64, 0.0, 0.0};
  const DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  const std::string text = tree_to_jsonl(t);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), t.cubes.size());
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  for (const char* key : {"id", "k", "parent", "center", "members_count", "mass"}) EXPECT_TRUE(first.contains(key));
}
