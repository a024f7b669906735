#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmt/space.hpp"

namespace gmt {

struct Cube {
  int id = -1;
  int level = 0;             // k, with side length 2^{-k}
  std::vector<int> members;  // sorted point indices
  int center = -1;           // point index of x_Q
  int parent = -1;
  std::vector<int> children;
  double mass = 0.0;
  double diam = 0.0;
};

enum class TreeMode {
  // Per-parent nets restricted to points well inside the parent; nested by construction, a0 >= 1/4.
  nested,
  // Christ-style: nets refined down to point resolution, each center hanging from its nearest coarser
  // center, cubes as unions of descendants. Reproduces dyadic intervals on evenly spaced 1-D samples.
  chained,
};

struct TreeOptions {
  TreeMode mode = TreeMode::nested;
  std::optional<int> k_min;  // defaults derived from the scale range
  std::optional<int> k_max;
  // Net size cap relative to total_mass / l^d; exceeding it means the cloud is not regular at that level.
  double max_net_density = 1e4;
};

struct DyadicTree {
  WeightedSet space;
  int k_min = 0;
  int k_max = 0;
  std::vector<Cube> cubes;
  std::vector<std::vector<int>> levels;  // cube ids per level, index k - k_min
  std::vector<std::vector<int>> labels;  // per level: point index -> cube id
  double a0 = 0.0;                       // measured inner-ball constant
  double C1 = 0.0;                       // measured diameter constant
  TreeMode mode = TreeMode::nested;

  int num_levels() const { return k_max - k_min + 1; }
  static double length_at(int level) { return std::ldexp(1.0, -level); }
  double length(int cube) const { return length_at(cubes[static_cast<std::size_t>(cube)].level); }
  const Cube& cube(int id) const { return cubes[static_cast<std::size_t>(id)]; }
  const std::vector<int>& level_cubes(int k) const { return levels[static_cast<std::size_t>(k - k_min)]; }
  int cube_of(int point, int k) const { return labels[static_cast<std::size_t>(k - k_min)][static_cast<std::size_t>(point)]; }
  const std::vector<int>& roots() const { return levels.front(); }
  int root_of(int cube) const;
  // Ancestor of a cube at a coarser (or equal) level.
  int ancestor_at(int cube, int k) const;
  bool contains(int ancestor, int descendant) const;
  // All cubes of D_Q (Q and its descendants), parents before children.
  std::vector<int> subtree(int cube) const;
};

DyadicTree build_tree(const WeightedSet& set, const TreeOptions& opts = {});

struct GridReport {
  bool ok = true;
  std::string violation;  // empty when ok
  std::string property;   // "i".."v" of the first violated property
  int witness_cube = -1;
  int witness_point = -1;
  double a0 = 0.0;
  double C1 = 0.0;
};

GridReport validate_grid(const DyadicTree& tree);

// KQ = { x in E : dist(x, Q) <= (K - 1) diam(Q) }, sorted point indices.
std::vector<int> dilate(const DyadicTree& tree, int cube, double K);

// D_{F,Q0}: descendants of Q0 (inclusive) not contained in any member of F.
std::vector<int> sawtooth(const DyadicTree& tree, int q0, const std::vector<int>& family);

// One JSON object per line: {id, k, parent, center, members_count, mass}.
std::string tree_to_jsonl(const DyadicTree& tree);
// "cube_id,point" rows for every cube.
std::string tree_members_csv(const DyadicTree& tree);
nlohmann::json to_json(const GridReport& report);

}  // namespace gmt
