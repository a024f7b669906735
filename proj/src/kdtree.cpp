#include "gmt/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gmt {

KdTree::KdTree(const Metric& metric, const double* coords, std::size_t count)
    : metric_(metric), coords_(coords), dim_(metric.dim()), ids_(count) {
  std::iota(ids_.begin(), ids_.end(), 0);
  build();
}

KdTree::KdTree(const Metric& metric, const double* coords, std::vector<int> ids)
    : metric_(metric), coords_(coords), dim_(metric.dim()), ids_(std::move(ids)) {
  build();
}

void KdTree::build() {
  nodes_.clear();
  bounds_.clear();
  if (ids_.empty()) return;
  nodes_.reserve(2 * ids_.size() / kLeafSize + 2);
  build_node(0, static_cast<std::int32_t>(ids_.size()));
}

std::int32_t KdTree::build_node(std::int32_t begin, std::int32_t end) {
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1});
  bounds_.resize(bounds_.size() + 2 * static_cast<std::size_t>(dim_));
  double* l = &bounds_[static_cast<std::size_t>(index) * 2 * dim_];
  double* h = l + dim_;
  std::fill(l, l + dim_, std::numeric_limits<double>::infinity());
  std::fill(h, h + dim_, -std::numeric_limits<double>::infinity());
  for (std::int32_t i = begin; i < end; ++i) {
    const double* p = pt(ids_[i]);
    for (int c = 0; c < dim_; ++c) {
      l[c] = std::min(l[c], p[c]);
      h[c] = std::max(h[c], p[c]);
    }
  }
  if (end - begin <= kLeafSize) return index;

  // Split the coordinate with the largest extent in metric units.
  int axis = 0;
  double widest = -1.0;
  for (int c = 0; c < dim_; ++c) {
    double ext = h[c] - l[c];
    if (metric_.is_parabolic() && c == metric_.n) ext = std::sqrt(ext);
    if (ext > widest) {
      widest = ext;
      axis = c;
    }
  }
  if (widest <= 0.0) return index;  // all points coincide

  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(ids_.begin() + begin, ids_.begin() + mid, ids_.begin() + end, [&](int a, int b) {
    const double va = pt(a)[axis], vb = pt(b)[axis];
    return va < vb || (va == vb && a < b);
  });
  const std::int32_t left = build_node(begin, mid);
  const std::int32_t right = build_node(mid, end);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

void KdTree::attach_weights(const double* weights) {
  weights_ = weights;
  node_weight_.assign(nodes_.size(), 0.0);
  // Children are created after their parent, so a reverse sweep sees children first.
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Node& nd = nodes_[i];
    if (nd.left < 0) {
      double s = 0.0;
      for (std::int32_t k = nd.begin; k < nd.end; ++k) s += weights[ids_[k]];
      node_weight_[i] = s;
    } else {
      node_weight_[i] = node_weight_[static_cast<std::size_t>(nd.left)] + node_weight_[static_cast<std::size_t>(nd.right)];
    }
  }
}

void KdTree::accumulate_shells(const double* q, const std::vector<double>& radii, double* shell) const {
  if (nodes_.empty() || radii.empty()) return;
  if (!weights_) throw std::logic_error("accumulate_shells needs attached weights");
  const double outer = radii.back();
  auto bucket = [&](double d) {
    return static_cast<std::size_t>(std::lower_bound(radii.begin(), radii.end(), d) - radii.begin());
  };
  std::int32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const std::int32_t ni = stack[--top];
    const Node& nd = nodes_[ni];
    const double lb = metric_.box_lower_bound(q, lo(ni), hi(ni));
    if (lb > outer) continue;
    const double ub = metric_.box_upper_bound(q, lo(ni), hi(ni));
    if (ub <= outer) {
      const std::size_t b = bucket(lb);
      if (b == bucket(ub)) {
        shell[b] += node_weight_[static_cast<std::size_t>(ni)];
        continue;
      }
    }
    if (nd.left < 0) {
      for (std::int32_t i = nd.begin; i < nd.end; ++i) {
        const int id = ids_[i];
        const double d = metric_.distance(q, pt(id));
        if (d <= outer) shell[bucket(d)] += weights_[id];
      }
      continue;
    }
    stack[top++] = nd.right;
    stack[top++] = nd.left;
  }
}

std::vector<int> KdTree::radius(const double* q, double r) const {
  std::vector<int> out;
  for_each_in_ball(q, r, [&](int id, double) { out.push_back(id); });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace gmt
