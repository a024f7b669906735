#include "gmt/dyadic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "gmt/parallel.hpp"

namespace gmt {

int DyadicTree::root_of(int c) const { return ancestor_at(c, k_min); }

int DyadicTree::ancestor_at(int c, int k) const {
  const Cube& q = cube(c);
  if (k > q.level) throw std::invalid_argument("ancestor_at: level is finer than the cube");
  if (k < k_min) throw std::invalid_argument("ancestor_at: level below the window");
  return cube_of(q.center, k);
}

bool DyadicTree::contains(int ancestor, int descendant) const {
  const Cube& a = cube(ancestor);
  const Cube& d = cube(descendant);
  if (a.level > d.level) return false;
  return cube_of(d.center, a.level) == ancestor;
}

std::vector<int> DyadicTree::subtree(int c) const {
  std::vector<int> out{c};
  for (std::size_t i = 0; i < out.size(); ++i)
    for (int ch : cube(out[i]).children) out.push_back(ch);
  return out;
}

namespace {

constexpr int kMaxGridDim = 8;
using CellKey = std::array<long long, kMaxGridDim>;

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::size_t h = 1469598103934665603ull;
    for (long long v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
    return h;
  }
};

// Uniform hash grid answering "is there a stored point closer than s?". Cells have side s in space
// and s^2 in parabolic time, so only the 3^dim neighboring cells can hold such a point.
class NetGrid {
 public:
  NetGrid(const WeightedSet& set, double s) : set_(set), s_(s), dim_(set.dim()) {
    if (dim_ > kMaxGridDim) throw std::invalid_argument("net grid supports at most 8 coordinates");
  }

  template <class Pred>
  bool separated(int id, Pred&& pred) const {
    const CellKey base = key(set_.point(static_cast<std::size_t>(id)));
    CellKey probe = base;
    std::array<int, kMaxGridDim> off{};
    off.fill(-1);
    while (true) {
      for (int c = 0; c < dim_; ++c) probe[static_cast<std::size_t>(c)] = base[static_cast<std::size_t>(c)] + off[static_cast<std::size_t>(c)];
      auto it = cells_.find(probe);
      if (it != cells_.end()) {
        for (int other : it->second) {
          if (!pred(other)) continue;
          if (set_.distance(static_cast<std::size_t>(id), static_cast<std::size_t>(other)) < s_) return false;
        }
      }
      int c = 0;
      while (c < dim_ && off[static_cast<std::size_t>(c)] == 1) off[static_cast<std::size_t>(c++)] = -1;
      if (c == dim_) break;
      ++off[static_cast<std::size_t>(c)];
    }
    return true;
  }

  void insert(int id) { cells_[key(set_.point(static_cast<std::size_t>(id)))].push_back(id); }

 private:
  CellKey key(const double* p) const {
    CellKey k{};
    const Metric& m = set_.metric();
    for (int c = 0; c < dim_; ++c) {
      const double side = (m.is_parabolic() && c == m.n) ? s_ * s_ : s_;
      k[static_cast<std::size_t>(c)] = static_cast<long long>(std::floor(p[c] / side));
    }
    return k;
  }

  const WeightedSet& set_;
  double s_;
  int dim_;
  std::unordered_map<CellKey, std::vector<int>, CellHash> cells_;
};

void check_net_density(const WeightedSet& set, int k, std::size_t count, double max_density) {
  const double expected = set.total_mass() / std::pow(DyadicTree::length_at(k), set.d());
  if (static_cast<double>(count) > max_density * std::max(expected, 1.0)) {
    std::ostringstream msg;
    msg << "cloud is not regular at level " << k << ": net of " << count << " centers against expected "
        << expected;
    throw std::runtime_error(msg.str());
  }
}

// Greedy s-separated net over all points in index order, seeded with `seed`.
std::vector<int> global_net(const WeightedSet& set, double s, const std::vector<int>& seed) {
  NetGrid grid(set, s);
  std::vector<char> chosen(set.size(), 0);
  std::vector<int> net;
  for (int c : seed) {
    grid.insert(c);
    chosen[static_cast<std::size_t>(c)] = 1;
    net.push_back(c);
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (chosen[i]) continue;
    if (grid.separated(static_cast<int>(i), [](int) { return true; })) {
      grid.insert(static_cast<int>(i));
      chosen[i] = 1;
      net.push_back(static_cast<int>(i));
    }
  }
  return net;
}

// Nearest center (ties: smallest point index) for every point.
std::vector<int> assign_nearest(const WeightedSet& set, const std::vector<int>& centers) {
  KdTree idx(set.metric(), set.coords().data(), centers);
  std::vector<int> out(set.size());
  parallel_for(set.size(), [&](std::size_t i) { out[i] = idx.nearest(set.point(i)).first; });
  return out;
}

void add_level(DyadicTree& t, const std::vector<std::vector<int>>& groups, const std::vector<int>& centers,
               const std::vector<int>& parents, int k) {
  std::vector<int> ids;
  std::vector<int> label(t.space.size(), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Cube q;
    q.id = static_cast<int>(t.cubes.size());
    q.level = k;
    q.members = groups[g];
    q.center = centers[g];
    q.parent = parents[g];
    for (int m : q.members) label[static_cast<std::size_t>(m)] = q.id;
    if (q.parent >= 0) t.cubes[static_cast<std::size_t>(q.parent)].children.push_back(q.id);
    ids.push_back(q.id);
    t.cubes.push_back(std::move(q));
  }
  t.levels.push_back(std::move(ids));
  t.labels.push_back(std::move(label));
}

void build_nested(DyadicTree& t, const TreeOptions& opts) {
  const WeightedSet& set = t.space;
  // Top level: global net with nearest-center assignment.
  {
    const double s = DyadicTree::length_at(t.k_min);
    std::vector<int> centers = global_net(set, s, {});
    std::sort(centers.begin(), centers.end());
    check_net_density(set, t.k_min, centers.size(), opts.max_net_density);
    const std::vector<int> owner = assign_nearest(set, centers);
    std::unordered_map<int, std::size_t> slot;
    for (std::size_t g = 0; g < centers.size(); ++g) slot[centers[g]] = g;
    std::vector<std::vector<int>> groups(centers.size());
    for (std::size_t i = 0; i < set.size(); ++i) groups[slot[owner[i]]].push_back(static_cast<int>(i));
    add_level(t, groups, centers, std::vector<int>(centers.size(), -1), t.k_min);
  }

  for (int k = t.k_min + 1; k <= t.k_max; ++k) {
    const double s = DyadicTree::length_at(k);
    const std::vector<int>& parent_label = t.labels.back();
    const std::vector<int> parent_ids = t.levels.back();
    std::vector<std::vector<int>> child_centers(parent_ids.size());

    // Nets are built per parent; parents are independent.
    parallel_for(parent_ids.size(), [&](std::size_t pi) {
      const Cube& p = t.cubes[static_cast<std::size_t>(parent_ids[pi])];
      std::vector<int>& chosen = child_centers[pi];
      chosen.push_back(p.center);
      if (p.members.size() == 1) return;
      NetGrid grid(set, s);
      grid.insert(p.center);
      for (int y : p.members) {
        if (y == p.center) continue;
        if (!grid.separated(y, [](int) { return true; })) continue;
        // Interior: no point outside the parent within s/4.
        const bool near_outside = set.index().any_within(set.point(static_cast<std::size_t>(y)), s / 4.0, [&](int id) {
          return parent_label[static_cast<std::size_t>(id)] != p.id;
        });
        if (near_outside) continue;
        grid.insert(y);
        chosen.push_back(y);
      }
    });

    std::size_t total = 0;
    for (const auto& c : child_centers) total += c.size();
    check_net_density(set, k, total, opts.max_net_density);

    std::vector<std::vector<std::vector<int>>> groups(parent_ids.size());
    parallel_for(parent_ids.size(), [&](std::size_t pi) {
      const Cube& p = t.cubes[static_cast<std::size_t>(parent_ids[pi])];
      const std::vector<int>& cs = child_centers[pi];
      groups[pi].assign(cs.size(), {});
      for (int y : p.members) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cs.size(); ++c) {
          const double dd = set.distance(static_cast<std::size_t>(y), static_cast<std::size_t>(cs[c]));
          if (dd < best_d || (dd == best_d && cs[c] < cs[best])) {
            best_d = dd;
            best = c;
          }
        }
        groups[pi][best].push_back(y);
      }
    });

    std::vector<std::vector<int>> flat_groups;
    std::vector<int> flat_centers, flat_parents;
    for (std::size_t pi = 0; pi < parent_ids.size(); ++pi) {
      for (std::size_t c = 0; c < child_centers[pi].size(); ++c) {
        flat_groups.push_back(std::move(groups[pi][c]));
        flat_centers.push_back(child_centers[pi][c]);
        flat_parents.push_back(parent_ids[pi]);
      }
    }
    add_level(t, flat_groups, flat_centers, flat_parents, k);
  }
}

void build_chained(DyadicTree& t, const TreeOptions& opts) {
  const WeightedSet& set = t.space;
  // Nested nets N_k for k = k_min .. k_fine, refined until every point is a center.
  std::vector<std::vector<int>> nets;
  std::vector<int> prev;
  int k = t.k_min;
  const int k_limit = t.k_max + 12;
  for (;; ++k) {
    std::vector<int> net = global_net(set, DyadicTree::length_at(k), prev);
    if (k <= t.k_max) check_net_density(set, k, net.size(), opts.max_net_density);
    nets.push_back(net);
    prev = std::move(net);
    if (prev.size() == set.size() || k >= std::max(k_limit, t.k_max)) break;
  }
  const int k_fine = k;

  // up[k][c]: the level-(k-1) center that a level-k center c hangs from.
  std::vector<std::vector<int>> up(nets.size());
  for (std::size_t li = 1; li < nets.size(); ++li) {
    up[li].assign(set.size(), -1);
    const std::vector<int>& coarse = nets[li - 1];
    KdTree idx(set.metric(), set.coords().data(), coarse);
    for (int c : coarse) up[li][static_cast<std::size_t>(c)] = c;
    for (int c : nets[li])
      if (up[li][static_cast<std::size_t>(c)] < 0)
        up[li][static_cast<std::size_t>(c)] = idx.nearest(set.point(static_cast<std::size_t>(c))).first;
  }

  // Center of each point at every level, finest first.
  std::vector<int> center = assign_nearest(set, nets.back());
  std::vector<std::vector<int>> center_at(nets.size());
  center_at.back() = center;
  for (std::size_t li = nets.size() - 1; li > 0; --li) {
    for (auto& c : center) c = up[li][static_cast<std::size_t>(c)];
    center_at[li - 1] = center;
  }
  (void)k_fine;

  for (int lev = t.k_min; lev <= t.k_max; ++lev) {
    const std::vector<int>& cat = center_at[static_cast<std::size_t>(lev - t.k_min)];
    std::vector<int> centers = nets[static_cast<std::size_t>(lev - t.k_min)];
    std::vector<std::vector<int>> groups;
    std::vector<int> used_centers, parents;
    std::unordered_map<int, std::size_t> slot;
    // Group ordering follows the parent cube order, then center index, for deterministic ids.
    std::vector<std::pair<int, int>> keyed;  // (parent cube, center)
    for (int c : centers) {
      const int parent = lev == t.k_min ? -1 : t.cube_of(c, lev - 1);
      keyed.emplace_back(parent, c);
    }
    std::sort(keyed.begin(), keyed.end());
    for (const auto& [parent, c] : keyed) {
      slot[c] = groups.size();
      groups.emplace_back();
      used_centers.push_back(c);
      parents.push_back(parent);
    }
    for (std::size_t i = 0; i < set.size(); ++i) groups[slot[cat[i]]].push_back(static_cast<int>(i));
    add_level(t, groups, used_centers, parents, lev);
  }
}

}  // namespace

DyadicTree build_tree(const WeightedSet& set, const TreeOptions& opts) {
  DyadicTree t;
  t.space = set;
  t.mode = opts.mode;
  t.k_min = opts.k_min ? *opts.k_min : static_cast<int>(std::ceil(-std::log2(set.r_max()) - 1e-12));
  t.k_max = opts.k_max ? *opts.k_max : static_cast<int>(std::floor(-std::log2(4.0 * set.r_min()) + 1e-12));
  if (t.k_max < t.k_min) throw std::invalid_argument("scale range too narrow for a single dyadic level");

  if (opts.mode == TreeMode::nested) build_nested(t, opts);
  else build_chained(t, opts);

  parallel_for(t.cubes.size(), [&](std::size_t i) {
    Cube& q = t.cubes[i];
    double m = 0.0;
    for (int p : q.members) m += set.weight(static_cast<std::size_t>(p));
    q.mass = m;
    q.diam = diameter_of(set, q.members);
  });

  // Cached masses must agree with direct ball masses: Q sits inside B(x_Q, diam Q).
  for (const Cube& q : t.cubes) {
    const double ball = ball_mass(set, static_cast<std::size_t>(q.center), q.diam);
    if (q.mass > ball * (1.0 + 1e-12))
      throw std::logic_error("cube mass exceeds the mass of its enclosing ball (cube " + std::to_string(q.id) + ")");
  }

  const GridReport rep = validate_grid(t);
  if (!rep.ok) throw std::logic_error("built tree violates the grid properties: " + rep.violation);
  t.a0 = rep.a0;
  t.C1 = rep.C1;
  return t;
}

GridReport validate_grid(const DyadicTree& t) {
  GridReport rep;
  const WeightedSet& set = t.space;
  const std::size_t n = set.size();
  auto fail = [&](const std::string& prop, const std::string& what, int cube, int point) {
    rep.ok = false;
    rep.property = prop;
    rep.violation = "property (" + prop + "): " + what;
    rep.witness_cube = cube;
    rep.witness_point = point;
    return rep;
  };

  if (static_cast<int>(t.levels.size()) != t.num_levels() || t.labels.size() != t.levels.size())
    return fail("i", "level tables do not match the level window", -1, -1);

  // (i) every level partitions the cloud.
  for (int k = t.k_min; k <= t.k_max; ++k) {
    std::vector<int> owner(n, -1);
    for (int c : t.level_cubes(k)) {
      const Cube& q = t.cube(c);
      if (q.level != k) return fail("i", "cube listed on the wrong level", c, -1);
      if (q.members.empty()) return fail("i", "empty cube", c, -1);
      for (int p : q.members) {
        if (p < 0 || static_cast<std::size_t>(p) >= n) return fail("i", "member index out of range", c, p);
        if (owner[static_cast<std::size_t>(p)] >= 0) return fail("i", "point belongs to two cubes of one level", c, p);
        owner[static_cast<std::size_t>(p)] = c;
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      if (owner[p] < 0) return fail("i", "point not covered at level " + std::to_string(k), -1, static_cast<int>(p));
      if (t.labels[static_cast<std::size_t>(k - t.k_min)][p] != owner[p])
        return fail("i", "label table disagrees with member lists", owner[p], static_cast<int>(p));
    }
  }

  // (ii) each cube lies inside its parent, and child lists match parent links.
  for (const Cube& q : t.cubes) {
    if (q.level == t.k_min) {
      if (q.parent >= 0) return fail("ii", "top-level cube has a parent", q.id, -1);
      continue;
    }
    if (q.parent < 0 || t.cube(q.parent).level != q.level - 1) return fail("ii", "missing or misplaced parent", q.id, -1);
    for (int p : q.members)
      if (t.cube_of(p, q.level - 1) != q.parent) return fail("ii", "cube not contained in its parent", q.id, p);
    const auto& sib = t.cube(q.parent).children;
    if (std::find(sib.begin(), sib.end(), q.id) == sib.end())
      return fail("ii", "cube missing from its parent's child list", q.id, -1);
  }

  // (iii) exactly one containing cube at every coarser level.
  for (const Cube& q : t.cubes) {
    for (int k = t.k_min; k < q.level; ++k) {
      const int a = t.cube_of(q.members.front(), k);
      for (int p : q.members)
        if (t.cube_of(p, k) != a) return fail("iii", "cube split between two ancestors at level " + std::to_string(k), q.id, p);
    }
  }

  // (iv) diameters, recomputed; (v) inner balls around the centers.
  std::vector<double> diam_ratio(t.cubes.size()), inner_ratio(t.cubes.size());
  std::vector<char> center_ok(t.cubes.size(), 1);
  parallel_for(t.cubes.size(), [&](std::size_t i) {
    const Cube& q = t.cubes[i];
    const double len = t.length(q.id);
    diam_ratio[i] = diameter_of(set, q.members) / len;
    const auto& lab = t.labels[static_cast<std::size_t>(q.level - t.k_min)];
    if (lab[static_cast<std::size_t>(q.center)] != q.id) center_ok[i] = 0;
    const auto hit = set.index().nearest_if(set.point(static_cast<std::size_t>(q.center)),
                                            [&](int id) { return lab[static_cast<std::size_t>(id)] != q.id; });
    inner_ratio[i] = hit.first < 0 ? std::numeric_limits<double>::infinity() : hit.second / len;
  });
  double c1 = 0.0, a0 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.cubes.size(); ++i) {
    if (!center_ok[i]) return fail("v", "center is not a member of its cube", static_cast<int>(i), t.cubes[i].center);
    c1 = std::max(c1, diam_ratio[i]);
    a0 = std::min(a0, inner_ratio[i]);
  }
  if (!(a0 > 0.0)) return fail("v", "a center touches a neighboring cube", -1, -1);
  // Cubes equal to the whole cloud impose no inner-ball constraint; cap at 1 so that
  // B(x_Q, a0 l(Q)) stays within the scale range.
  rep.a0 = std::min(a0, 1.0);
  rep.C1 = c1;
  return rep;
}

std::vector<int> dilate(const DyadicTree& t, int c, double K) {
  if (!(K >= 1.0)) throw std::invalid_argument("dilate: K must be >= 1");
  const Cube& q = t.cube(c);
  const double reach = (K - 1.0) * q.diam;
  if (reach <= 0.0) return q.members;
  const WeightedSet& set = t.space;
  const auto& lab = t.labels[static_cast<std::size_t>(q.level - t.k_min)];
  std::vector<int> out;
  const double* center = set.point(static_cast<std::size_t>(q.center));
  // A private index over Q keeps each distance-to-Q query logarithmic; points within reach of the
  // center need no query.
  const KdTree inside(set.metric(), set.coords().data(), q.members);
  set.index().for_each_in_ball(center, q.diam + reach, [&](int id, double d) {
    if (d <= reach || lab[static_cast<std::size_t>(id)] == c ||
        inside.nearest_if(set.point(static_cast<std::size_t>(id)), [](int) { return true; }, reach).first >= 0)
      out.push_back(id);
  });
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> sawtooth(const DyadicTree& t, int q0, const std::vector<int>& family) {
  std::vector<int> fam = family;
  std::sort(fam.begin(), fam.end());
  if (std::adjacent_find(fam.begin(), fam.end()) != fam.end())
    throw std::invalid_argument("sawtooth: family lists a cube twice");
  for (int f : fam) {
    if (f < 0 || static_cast<std::size_t>(f) >= t.cubes.size()) throw std::invalid_argument("sawtooth: bad cube id");
    if (!t.contains(q0, f)) throw std::invalid_argument("sawtooth: family member outside Q0");
  }
  for (std::size_t i = 0; i < fam.size(); ++i)
    for (std::size_t j = 0; j < fam.size(); ++j)
      if (i != j && t.contains(fam[i], fam[j]))
        throw std::invalid_argument("sawtooth: family members overlap (" + std::to_string(fam[i]) + " contains " +
                                    std::to_string(fam[j]) + ")");
  std::vector<int> out;
  std::vector<int> stack{q0};
  while (!stack.empty()) {
    const int c = stack.back();
    stack.pop_back();
    if (std::binary_search(fam.begin(), fam.end(), c)) continue;
    out.push_back(c);
    const auto& ch = t.cube(c).children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string tree_to_jsonl(const DyadicTree& t) {
  std::string out;
  for (const Cube& q : t.cubes) {
    nlohmann::json j = {{"id", q.id},         {"k", q.level},
                        {"parent", q.parent}, {"center", q.center},
                        {"members_count", q.members.size()}, {"mass", q.mass}};
    if (q.parent < 0) j["parent"] = nullptr;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string tree_members_csv(const DyadicTree& t) {
  std::string out = "cube_id,point\n";
  for (const Cube& q : t.cubes)
    for (int p : q.members) out += std::to_string(q.id) + "," + std::to_string(p) + "\n";
  return out;
}

nlohmann::json to_json(const GridReport& r) {
  return {{"ok", r.ok},
          {"violation", r.violation},
          {"property", r.property},
          {"witness_cube", r.witness_cube},
          {"witness_point", r.witness_point},
          {"a0", r.a0},
          {"C1", r.C1}};
}

}  // namespace gmt
