#pragma once

#include <string>

namespace gmt {

enum class MetricKind { euclidean, parabolic };

// Euclidean R^n, or parabolic R^n x R with coordinates (X, t) and
// d_p((X,t),(Y,s)) = |X - Y| + |t - s|^{1/2}. The time coordinate is stored last.
struct Metric {
  MetricKind kind = MetricKind::euclidean;
  int n = 1;

  static Metric euclidean(int n) { return {MetricKind::euclidean, n}; }
  static Metric parabolic(int n) { return {MetricKind::parabolic, n}; }

  // Number of stored coordinates per point.
  int dim() const { return kind == MetricKind::parabolic ? n + 1 : n; }
  int spatial_dim() const { return n; }
  bool is_parabolic() const { return kind == MetricKind::parabolic; }

  double distance(const double* a, const double* b) const;

  // Lower bound on the distance from q to any point of the axis-aligned box [lo, hi].
  double box_lower_bound(const double* q, const double* lo, const double* hi) const;
  // Upper bound on the distance from q to any point of the box.
  double box_upper_bound(const double* q, const double* lo, const double* hi) const;

  std::string name() const { return kind == MetricKind::parabolic ? "parabolic" : "euclidean"; }
  static Metric from_name(const std::string& name, int n);

  bool operator==(const Metric&) const = default;
};

}  // namespace gmt
