#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "gmt/beta.hpp"
#include "gmt/fixtures.hpp"

using namespace gmt;

namespace {

std::vector<int> brute_dilation(const DyadicTree& t, int c, double K) {
  const Cube& q = t.cube(c);
  const WeightedSet& s = t.space;
  std::vector<int> out;
  for (std::size_t x = 0; x < s.size(); ++x) {
    double dist = std::numeric_limits<double>::infinity();
    for (int m : q.members) dist = std::min(dist, s.distance(x, m));
    if (dist <= (K - 1) * q.diam) out.push_back(static_cast<int>(x));
  }
  return out;
}

// min over lines of sum w dist^2 on 2Q in R^2, by an angle x offset grid refined three times.
double grid_line_sum(const DyadicTree& t, int c) {
  const WeightedSet& E = t.space;
  const std::vector<int> ids = brute_dilation(t, c, 2.0);
  const double* x0 = E.point(static_cast<std::size_t>(t.cube(c).center));
  const double span = 2.0 * t.cube(c).diam;
  auto sum_at = [&](double angle, double offset) {
    const double nx = std::cos(angle), ny = std::sin(angle);
    double s = 0.0;
    for (int y : ids) {
      const double* p = E.point(static_cast<std::size_t>(y));
      const double d = nx * (p[0] - x0[0]) + ny * (p[1] - x0[1]) - offset;
      s += E.weight(static_cast<std::size_t>(y)) * d * d;
    }
    return s;
  };
  double best = std::numeric_limits<double>::infinity(), ba = 0.0, bo = 0.0;
  double a_lo = 0.0, a_hi = std::numbers::pi, o_lo = -span, o_hi = span;
  for (int round = 0; round < 4; ++round) {
    const int steps = 120;
    const double da = (a_hi - a_lo) / steps, dof = (o_hi - o_lo) / steps;
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps; ++j) {
        const double a = a_lo + i * da, o = o_lo + j * dof;
        const double s = sum_at(a, o);
        if (s < best) best = s, ba = a, bo = o;
      }
    a_lo = ba - 2 * da, a_hi = ba + 2 * da, o_lo = bo - 2 * dof, o_hi = bo + 2 * dof;
  }
  return best;
}

WeightedSet transformed(const WeightedSet& E, double scale, double angle, double dx, double dy) {
  std::vector<double> coords;
  std::vector<double> weights;
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < E.size(); ++i) {
    const double* p = E.point(i);
    coords.push_back(scale * (c * p[0] - s * p[1]) + dx);
    coords.push_back(scale * (s * p[0] + c * p[1]) + dy);
    weights.push_back(E.weight(i) * std::pow(scale, E.d()));
  }
  return WeightedSet(E.metric(), coords, weights, E.d(), scale * E.r_min(), scale * E.r_max());
}

std::map<std::vector<int>, int> cubes_by_members(const DyadicTree& t) {
  std::map<std::vector<int>, int> out;
  for (const Cube& q : t.cubes) out.emplace(q.members, q.id);
  return out;
}

}  // namespace

TEST(BetaQ, MemberPlaneGivesZero) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  const PlaneFamily lines = PlaneFamily::affine(1);
  for (const Cube& q : t.cubes) {
    EXPECT_LT(beta_q(t, q.id, lines, 2.0).value, 1e-12);
    EXPECT_LT(beta_inf(t, q.id, lines).value, 1e-12);
    EXPECT_LT(bbeta(t, q.id, lines).value, 1e-12);
  }
  const DyadicTree plane = build_tree(flat_cloud(3, 2, SampleSpec{1.0, 1.0 / 32, 0.0, 0.0}));
  for (const Cube& q : plane.cubes) EXPECT_LT(beta_q(plane, q.id, PlaneFamily::affine(2), 2.0).value, 1e-12);
}

TEST(BetaQ, TwoParallelLinesFitTheMidline) {
  const double s = 0.3;
  SampleSpec spec{1.0, 1.0 / 128, 0.0, 0.0};
  const DyadicTree t = build_tree(two_planes(2, 1, spec, s));
  int checked = 0;
  for (const Cube& q : t.cubes) {
    // Balanced: the two lines contribute the same abscissae to 2Q.
    std::vector<double> low, high;
    for (int y : dilate(t, q.id, 2.0)) {
      const double* p = t.space.point(static_cast<std::size_t>(y));
      (p[1] > s / 2 ? high : low).push_back(p[0]);
    }
    std::sort(low.begin(), low.end());
    std::sort(high.begin(), high.end());
    if (low.empty() || low != high) continue;
    const BetaValue b = beta_q(t, q.id, PlaneFamily::affine(1), 2.0);
    const double want = (s / 2) / q.diam;
    EXPECT_NEAR(b.normalized, want, 1e-9) << "cube " << q.id;
    EXPECT_NEAR(std::sqrt(grid_line_sum(t, q.id) / (2 * low.size() * t.space.weight(0))) / q.diam, want, 0.02 * want);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(BetaQ, LeastSquaresMatchesBruteForceGrid) {
  SampleSpec spec{1.0, 1.0 / 128, 0.0, 0.0};
  const DyadicTree t = build_tree(lipschitz_graph(1, 0.8, spec, 17));
  int checked = 0;
  for (const Cube& q : t.cubes) {
    if (q.level > t.k_min + 2) continue;
    const BetaValue b = beta_q(t, q.id, PlaneFamily::affine(1), 2.0);
    const double grid = std::sqrt(grid_line_sum(t, q.id) / q.mass) / q.diam;
    EXPECT_LE(b.value, grid * (1 + 1e-9));
    EXPECT_NEAR(b.value, grid, 0.02 * grid) << "cube " << q.id;
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(BetaOrdering, JensenAndBilateralDominance) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const std::vector<DyadicTree> trees = {build_tree(lipschitz_graph(1, 0.6, spec, 4)), build_tree(staircase(0.4, 6, spec)),
                                         build_tree(two_planes(2, 1, spec, 0.2))};
  const PlaneFamily lines = PlaneFamily::affine(1);
  for (const DyadicTree& t : trees)
    for (const Cube& q : t.cubes) {
      if (q.level > t.k_min + 3) continue;
      // Absolute slack 1e-12 absorbs roundoff on cubes lying on one line.
      const double b1 = beta_q(t, q.id, lines, 1.0).normalized;
      const double b2 = beta_q(t, q.id, lines, 2.0).normalized;
      const BetaValue binf = beta_inf(t, q.id, lines);
      const BetaValue bb = bbeta(t, q.id, lines);
      EXPECT_LE(b1, b2 * (1 + 1e-9) + 1e-12);
      EXPECT_LE(b2, binf.value * (1 + 1e-9) + 1e-12);
      EXPECT_GE(bb.value, binf.value * (1 - 1e-9) - 1e-12);
      EXPECT_NEAR(bb.value, bb.first_term + bb.second_term, 1e-12);
      // Planes through the center: beta <= centered <= 2 beta.
      const double centered = beta_inf_centered(t, q.id, lines).value;
      EXPECT_GE(centered, binf.value * (1 - 1e-9) - 1e-12);
      EXPECT_LE(centered, 2 * binf.value * (1 + 1e-9) + 1e-12);
    }
}

TEST(Bbeta, FarMemberHasEmptySecondTerm) {
  SampleSpec spec{1.0, 1.0 / 128, 0.0, 0.0};
  const DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  const PlaneFamily far = PlaneFamily::explicit_sets({flat_cloud(2, 1, spec, 10.0)});
  for (const Cube& q : t.cubes) {
    const BetaValue b = bbeta(t, q.id, far);
    EXPECT_EQ(b.second_term, 0.0);
    EXPECT_GE(b.first_term, 1.0);
  }
}

TEST(BetaInvariance, IsometryAndScale) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const WeightedSet E = lipschitz_graph(1, 0.5, spec, 9);
  const DyadicTree t = build_tree(E);
  const PlaneFamily lines = PlaneFamily::affine(1);
  const WeightedSet moved = transformed(E, 1.0, 0.7, 3.0, -2.0);
  const WeightedSet scaled = transformed(E, 2.0, 0.0, 0.0, 0.0);
  for (const WeightedSet* other : {&moved, &scaled}) {
    const DyadicTree u = build_tree(*other);
    const auto index = cubes_by_members(u);
    int matched = 0;
    for (const Cube& q : t.cubes) {
      if (q.level > t.k_min + 3) continue;
      const auto it = index.find(q.members);
      if (it == index.end()) continue;
      ++matched;
      EXPECT_NEAR(beta_q(u, it->second, lines, 2.0).value, beta_q(t, q.id, lines, 2.0).value, 1e-9);
      EXPECT_NEAR(beta_inf(u, it->second, lines).value, beta_inf(t, q.id, lines).value, 1e-6);
    }
    EXPECT_GT(matched, 10);
  }
}

TEST(GeometricLemmas, PlaneSumsVanish) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const DyadicTree t = build_tree(flat_cloud(2, 1, spec));
  const PlaneFamily lines = PlaneFamily::affine(1);
  const GeometricLemmaReport g = glem_check(t, lines, 2.0, 2.0, 1e-6);
  EXPECT_TRUE(g.ok);
  EXPECT_LT(g.worst_ratio, 1e-12);
  EXPECT_TRUE(wglem_check(t, lines, 0.01, 1e-6).ok);
  EXPECT_TRUE(bwglem_check(t, lines, 0.01, 1e-6).ok);
}

TEST(GeometricLemmas, VacuousAboveTwo) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const DyadicTree t = build_tree(staircase(1.0, 6, spec));
  const PlaneFamily lines = PlaneFamily::affine(1);
  const GeometricLemmaReport w = wglem_check(t, lines, 2.01, 1e-9);
  const GeometricLemmaReport b = bwglem_check(t, lines, 2.01, 1e-9);
  EXPECT_TRUE(w.ok);
  EXPECT_TRUE(b.ok);
  EXPECT_EQ(w.worst_ratio, 0.0);
  EXPECT_EQ(b.worst_ratio, 0.0);
}

TEST(GeometricLemmas, GrowsWithLipschitzConstant) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  double last = 0.0;
  for (double lambda : {0.1, 0.3, 1.0}) {
    const DyadicTree t = build_tree(lipschitz_graph(1, lambda, spec, 5));
    const GeometricLemmaReport g = glem_check(t, PlaneFamily::affine(1), 2.0, 2.0, 1e9);
    EXPECT_TRUE(std::isfinite(g.worst_ratio));
    EXPECT_GT(g.worst_ratio, last) << "lambda " << lambda;
    last = g.worst_ratio;
  }
}

TEST(Companion, FourLevelsUpOnUniformInterval) {
  const int count = 1 << 10;
  const double h = 1.0 / count;
  std::vector<double> coords;
  for (int j = 0; j < count; ++j) coords.push_back(j * h);
  TreeOptions opts;
  opts.mode = TreeMode::chained;
  opts.k_min = 0;
  opts.k_max = 8;
  const DyadicTree t = build_tree(make_cloud(Metric::euclidean(1), coords, h, 1.0, 2 * h, 1.0), opts);
  const double delta = matching_radius(t.space);
  int checked = 0;
  for (const Cube& q : t.cubes) {
    if (q.level < t.k_min + 4 || q.level > 7) continue;
    // diam = (2^{10-k} - 1) h, so level k - 4 is the finest reaching 10 diam(Q).
    const int c = companion_cube(t, t, q.id);
    EXPECT_EQ(t.cube(c).level, q.level - 4);
    const int ancestor = t.ancestor_at(q.id, q.level - 4);
    const double lo = t.space.point(static_cast<std::size_t>(q.members.front()))[0] - delta;
    const double hi = t.space.point(static_cast<std::size_t>(q.members.back()))[0] + delta;
    const Cube& a = t.cube(ancestor);
    if (t.space.point(static_cast<std::size_t>(a.members.front()))[0] <= lo &&
        hi <= t.space.point(static_cast<std::size_t>(a.members.back()))[0]) {
      EXPECT_EQ(c, ancestor);
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
  EXPECT_THROW(companion_cube(t, t, t.roots().front()), std::runtime_error);
}

TEST(Companion, MultiplicityByExhaustiveCount) {
  SampleSpec spec{1.0, 1.0 / 512, 0.0, 0.0};
  const DyadicTree t = build_tree(lipschitz_graph(1, 0.4, spec, 2));
  std::vector<int> companions;
  for (const Cube& q : t.cubes) {
    try {
      companions.push_back(companion_cube(t, t, q.id));
    } catch (const std::runtime_error&) {
      companions.push_back(-1);
    }
  }
  std::map<int, int> count;
  for (int c : companions)
    if (c >= 0) ++count[c];
  int worst = 0;
  for (const auto& [c, n] : count) worst = std::max(worst, n);
  const MultiplicityReport r = companion_multiplicity(t, t, companions);
  EXPECT_EQ(r.max_multiplicity, worst);
  EXPECT_LE(r.max_multiplicity, r.bound);
  EXPECT_TRUE(r.ok);
}

TEST(INumbers, ContainingTargetAndParallelLine) {
  SampleSpec spec{1.0, 1.0 / 256, 0.0, 0.0};
  const WeightedSet E = flat_cloud(2, 1, spec);
  const DyadicTree t = build_tree(E);
  const double h = 0.01;
  const WeightedSet shifted = flat_cloud(2, 1, spec, h);
  for (const Cube& q : t.cubes) {
    EXPECT_EQ(i_numbers(t, E, q.id, 2.0), 0.0);
    EXPECT_EQ(i_numbers(t, E, q.id, kInfQ), 0.0);
    if (h >= 2 * q.diam) continue;
    EXPECT_NEAR(i_numbers(t, shifted, q.id, kInfQ), h / q.diam, 1e-12);
    double mass_2q = 0.0;
    for (int y : brute_dilation(t, q.id, 2.0)) mass_2q += E.weight(static_cast<std::size_t>(y));
    EXPECT_NEAR(i_numbers(t, shifted, q.id, 2.0), std::sqrt(mass_2q / q.mass) * h / q.diam, 1e-12);
  }
}

TEST(Transfer, SelfCatalogTwoPlanesAndGate) {
  SampleSpec spec{1.0, 1.0 / 128, 0.0, 0.0};
  const WeightedSet line = flat_cloud(2, 1, spec);
  const DyadicTree t = build_tree(line);
  const TransferReport self = transfer_check(t, ApproximantCatalog::build({line}), PlaneFamily::affine(1), 1.0);
  EXPECT_TRUE(self.ok);
  EXPECT_EQ(self.lq.degenerate, 0);
  EXPECT_EQ(self.bilateral.degenerate, 0);

  const WeightedSet two = two_planes(2, 1, spec, 0.5);
  const DyadicTree u = build_tree(two);
  const ApproximantCatalog cat = ApproximantCatalog::build({flat_cloud(2, 1, spec, 0.0), flat_cloud(2, 1, spec, 0.5)});
  const double theta = bp_check(u, cat.sets, 0.0).min_theta;
  ASSERT_GT(theta, 0.0);
  const TransferReport r = transfer_check(u, cat, PlaneFamily::affine(1), theta);
  EXPECT_TRUE(r.ok);
  for (const ComparisonStat* s : {&r.lq, &r.sup, &r.bilateral}) {
    EXPECT_TRUE(std::isfinite(s->constant)) << s->name;
    EXPECT_EQ(s->degenerate, 0) << s->name;
  }
  EXPECT_TRUE(std::isfinite(r.glem.worst_ratio));

  // 1/q - 1/p + 1/d: 1/2 - 1/2 + 1 > 0 passes, 1/2 - 4 + 1 < 0 fails.
  EXPECT_TRUE(transfer_gate(2.0, 2.0, 1.0));
  EXPECT_FALSE(transfer_gate(0.25, 2.0, 1.0));
  TransferOptions bad;
  bad.p = 0.25;
  try {
    transfer_check(t, ApproximantCatalog::build({line}), PlaneFamily::affine(1), 1.0, bad);
    ADD_FAILURE() << "gate violation accepted";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("1/q - 1/p + 1/d > 0"), std::string::npos);
  }
}
