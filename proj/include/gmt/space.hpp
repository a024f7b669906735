#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmt/kdtree.hpp"
#include "gmt/metric.hpp"

namespace gmt {

// A finite weighted point cloud standing in for (E, mu|_E), valid for radii in
// [r_min, r_max]. Coordinates, weights and the spatial index are shared and
// immutable; copies are cheap.
class WeightedSet {
 public:
  WeightedSet() = default;
  WeightedSet(const Metric& metric, std::vector<double> coords, std::vector<double> weights, double d,
              double r_min, double r_max);

  const Metric& metric() const { return data_->metric; }
  int dim() const { return data_->metric.dim(); }
  std::size_t size() const { return data_ ? data_->weights.size() : 0; }
  bool empty() const { return size() == 0; }
  const double* point(std::size_t i) const { return data_->coords.data() + i * static_cast<std::size_t>(dim()); }
  double weight(std::size_t i) const { return data_->weights[i]; }
  const std::vector<double>& coords() const { return data_->coords; }
  const std::vector<double>& weights() const { return data_->weights; }
  double total_mass() const { return data_->total_mass; }
  const KdTree& index() const { return data_->index; }
  double d() const { return d_; }
  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  double distance(std::size_t i, std::size_t j) const { return metric().distance(point(i), point(j)); }

  WeightedSet with_scale_range(double r_min, double r_max) const;
  // Sub-cloud on the given (sorted, unique) indices, keeping weights.
  WeightedSet subset(const std::vector<int>& ids, double r_min, double r_max) const;

 private:
  struct Data {
    Metric metric;
    std::vector<double> coords;
    std::vector<double> weights;
    double total_mass = 0.0;
    KdTree index;
  };
  std::shared_ptr<const Data> data_;
  double d_ = 1.0;
  double r_min_ = 0.0;
  double r_max_ = 0.0;
};

// mu(B(center, r) ∩ E) with closed balls.
double ball_mass(const WeightedSet& set, const double* center, double r);
double ball_mass(const WeightedSet& set, std::size_t center_index, double r);

struct ScaleStat {
  double radius = 0.0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
};

struct RegularityReport {
  bool ok = false;
  double constant_C = 0.0;  // meaningful when ok
  int worst_center = -1;
  double worst_radius = 0.0;
  double worst_ratio = 0.0;
  std::vector<ScaleStat> per_scale;
  std::string failure;
  double d = 1.0;
  double r_min = 0.0;
  double r_max = 0.0;
  double set_diameter = 0.0;
};

struct RegularityOptions {
  int radii_per_octave = 8;
  // Optional subset of center indices; empty means every cloud point.
  std::vector<int> centers;
  // When positive and no centers are given, at most this many evenly strided points are used.
  int max_centers = 0;
};

// Logarithmic radius grid r_min * 2^{j/per_octave} covering [r_min, r_max].
std::vector<double> log_radii(double r_min, double r_max, int per_octave = 8);

RegularityReport regularity_check(const WeightedSet& set, const RegularityOptions& opts = {});

struct LocalizedSet {
  WeightedSet set;
  std::vector<int> ids;  // indices into the source cloud, sorted
  int steps = 0;
  bool stabilized = false;
};

// Builds E_{x,r}: A_0 = B(x,r) ∩ E, A_k = union over z in A_{k-1} of B(z, 2^{-k} r) ∩ E,
// iterated until stable (at most ceil(log2(r / r_min)) + 4 steps). The result is valid on (r_min, 10 r).
LocalizedSet localize(const WeightedSet& set, std::size_t x, double r);

// Trades a regularity report up to scale R for one up to R' >= R (bounded sets only).
RegularityReport scale_trade(const RegularityReport& report, double R, double R_prime);

double diameter(const WeightedSet& set);
double diameter_of(const WeightedSet& set, const std::vector<int>& ids);
double max_nn_distance(const WeightedSet& set);

nlohmann::json to_json(const RegularityReport& report);

// CSV "x1,...,xn[,t],w" plus a JSON sidecar with metric, n, d and the scale range.
void write_cloud(const WeightedSet& set, const std::string& csv_path, const std::string& sidecar_path);
WeightedSet read_cloud(const std::string& csv_path, const std::string& sidecar_path);
std::string sidecar_path_for(const std::string& csv_path);

}  // namespace gmt
