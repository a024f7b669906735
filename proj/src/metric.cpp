#include "gmt/metric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmt {

double Metric::distance(const double* a, const double* b) const {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  if (kind == MetricKind::euclidean) return std::sqrt(s);
  return std::sqrt(s) + std::sqrt(std::abs(a[n] - b[n]));
}

double Metric::box_lower_bound(const double* q, const double* lo, const double* hi) const {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    double g = 0.0;
    if (q[i] < lo[i]) g = lo[i] - q[i];
    else if (q[i] > hi[i]) g = q[i] - hi[i];
    s += g * g;
  }
  if (kind == MetricKind::euclidean) return std::sqrt(s);
  double gt = 0.0;
  if (q[n] < lo[n]) gt = lo[n] - q[n];
  else if (q[n] > hi[n]) gt = q[n] - hi[n];
  return std::sqrt(s) + std::sqrt(gt);
}

double Metric::box_upper_bound(const double* q, const double* lo, const double* hi) const {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = std::max(std::abs(q[i] - lo[i]), std::abs(q[i] - hi[i]));
    s += g * g;
  }
  if (kind == MetricKind::euclidean) return std::sqrt(s);
  const double gt = std::max(std::abs(q[n] - lo[n]), std::abs(q[n] - hi[n]));
  return std::sqrt(s) + std::sqrt(gt);
}

Metric Metric::from_name(const std::string& name, int n) {
  if (n < 1) throw std::invalid_argument("metric dimension must be >= 1");
  if (name == "euclidean") return euclidean(n);
  if (name == "parabolic") return parabolic(n);
  throw std::invalid_argument("unknown metric '" + name + "'");
}

}  // namespace gmt
