#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "gmt/metric.hpp"

namespace gmt {

// Static kd-tree over a borrowed coordinate array. Pruning uses the metric's box
// bounds, so the same tree serves Euclidean and parabolic clouds. Indices
// returned are positions in the coordinate array (or in the subset, when one is given,
// translated back to the original ids).
class KdTree {
 public:
  KdTree() = default;
  KdTree(const Metric& metric, const double* coords, std::size_t count);
  KdTree(const Metric& metric, const double* coords, std::vector<int> ids);

  std::size_t size() const { return ids_.size(); }
  const Metric& metric() const { return metric_; }

  // Visits every point with dist(q, p) <= r as f(id, dist).
  template <class F>
  void for_each_in_ball(const double* q, double r, F&& f) const;

  std::vector<int> radius(const double* q, double r) const;

  // Nearest point; ties go to the smallest id. Returns {-1, inf} on an empty tree.
  std::pair<int, double> nearest(const double* q) const {
    return nearest_if(q, [](int) { return true; });
  }

  // Nearest point among those satisfying pred, searched within max_r.
  template <class Pred>
  std::pair<int, double> nearest_if(const double* q, Pred&& pred,
                                    double max_r = std::numeric_limits<double>::infinity()) const;

  // True if some point with pred(id) lies within distance r of q.
  template <class Pred>
  bool any_within(const double* q, double r, Pred&& pred) const;

  // Caches per-node weight sums; weights are indexed by point id and must outlive the tree.
  void attach_weights(const double* weights);

  // Adds the weight of every point into shell[j], j the first index with dist <= radii[j]
  // (radii ascending); points beyond radii.back() are skipped. Whole nodes are added when
  // they fall inside a single shell.
  void accumulate_shells(const double* q, const std::vector<double>& radii, double* shell) const;

 private:
  struct Node {
    std::int32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
  };

  void build();
  std::int32_t build_node(std::int32_t begin, std::int32_t end);
  const double* lo(std::int32_t node) const { return &bounds_[static_cast<std::size_t>(node) * 2 * dim_]; }
  const double* hi(std::int32_t node) const { return lo(node) + dim_; }
  const double* pt(int id) const { return coords_ + static_cast<std::size_t>(id) * dim_; }

  Metric metric_;
  const double* coords_ = nullptr;
  int dim_ = 0;
  std::vector<int> ids_;
  std::vector<Node> nodes_;
  std::vector<double> bounds_;
  std::vector<double> node_weight_;
  const double* weights_ = nullptr;
  static constexpr int kLeafSize = 16;
};

template <class F>
void KdTree::for_each_in_ball(const double* q, double r, F&& f) const {
  if (nodes_.empty()) return;
  std::int32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const std::int32_t ni = stack[--top];
    const Node& nd = nodes_[ni];
    if (metric_.box_lower_bound(q, lo(ni), hi(ni)) > r) continue;
    if (nd.left < 0) {
      for (std::int32_t i = nd.begin; i < nd.end; ++i) {
        const int id = ids_[i];
        const double d = metric_.distance(q, pt(id));
        if (d <= r) f(id, d);
      }
      continue;
    }
    stack[top++] = nd.right;
    stack[top++] = nd.left;
  }
}

template <class Pred>
std::pair<int, double> KdTree::nearest_if(const double* q, Pred&& pred, double max_r) const {
  int best = -1;
  double best_d = max_r;
  if (nodes_.empty()) return {best, std::numeric_limits<double>::infinity()};
  struct Item {
    double lb;
    std::int32_t node;
  };
  Item stack[128];
  int top = 0;
  stack[top++] = {metric_.box_lower_bound(q, lo(0), hi(0)), 0};
  while (top > 0) {
    const Item it = stack[--top];
    if (it.lb > best_d) continue;
    const Node& nd = nodes_[it.node];
    if (nd.left < 0) {
      for (std::int32_t i = nd.begin; i < nd.end; ++i) {
        const int id = ids_[i];
        const double d = metric_.distance(q, pt(id));
        if (d < best_d || (d == best_d && (best < 0 || id < best))) {
          if (d <= best_d && pred(id)) {
            best = id;
            best_d = d;
          }
        }
      }
      continue;
    }
    const double dl = metric_.box_lower_bound(q, lo(nd.left), hi(nd.left));
    const double dr = metric_.box_lower_bound(q, lo(nd.right), hi(nd.right));
    // Push the farther child first so the nearer one is explored first.
    if (dl <= dr) {
      stack[top++] = {dr, nd.right};
      stack[top++] = {dl, nd.left};
    } else {
      stack[top++] = {dl, nd.left};
      stack[top++] = {dr, nd.right};
    }
  }
  if (best < 0) return {-1, std::numeric_limits<double>::infinity()};
  return {best, best_d};
}

template <class Pred>
bool KdTree::any_within(const double* q, double r, Pred&& pred) const {
  return nearest_if(q, pred, r).first >= 0;
}

}  // namespace gmt
