#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "gmt/carleson.hpp"
#include "gmt/dyadic.hpp"
#include "gmt/space.hpp"

namespace gmt {

struct ApproximantCatalog {
  std::vector<WeightedSet> sets;
  std::vector<RegularityReport> reports;
  double uniform_constant = 0.0;  // max regularity constant over the members

  // Measures every member; throws if a member fails its regularity check.
  static ApproximantCatalog build(std::vector<WeightedSet> sets, const RegularityOptions& opts = {});
  std::size_t size() const { return sets.size(); }
};

struct StoppingRegime {
  int id = -1;
  std::vector<int> cubes;  // sorted
  int maximal = -1;
  int approximant = -1;
};

struct CoronaDecomposition {
  const DyadicTree* tree = nullptr;
  std::vector<StoppingRegime> regimes;
  std::vector<int> bad;  // sorted
  double eta = 0.0;
  double K = 2.0;
  double packing_constant = 0.0;

  std::vector<int> maximal_cubes() const;
  // Regime index of every cube, -1 for bad cubes.
  std::vector<int> cube_regime() const;
};

struct CoherenceReport {
  bool ok = true;
  std::string clause;  // "a", "b" or "c"
  std::string message;
  int witness = -1;
};

CoherenceReport validate_coherence(const StoppingRegime& regime, const DyadicTree& tree, bool semi_coherent = false);

// dist(x, catalog member) for every point x of the tree's cloud, one row per member.
std::vector<std::vector<double>> distance_table(const WeightedSet& set, const ApproximantCatalog& catalog);

// KQ for every cube of the tree.
std::vector<std::vector<int>> all_dilations(const DyadicTree& tree, double K);

// sup over x in KQ of dist(x, member) / l(Q).
double proximity_ratio(const DyadicTree& tree, int cube, const std::vector<int>& kq, const std::vector<double>& dist);

struct CoronaReport {
  bool ok = true;
  bool partition_ok = true;
  bool coherence_ok = true;
  bool packing_ok = true;
  bool proximity_ok = true;
  PackingResult packing;
  double worst_proximity_ratio = 0.0;  // over regime cubes, in units of l(Q)
  int worst_proximity_cube = -1;
  std::vector<int> proximity_failures;  // regime cubes with ratio >= eta
  std::vector<int> window_boundary;     // regime tops forced by the coarsest level
  std::vector<std::string> messages;
};

CoronaReport validate_corona(const CoronaDecomposition& corona, const ApproximantCatalog& catalog,
                             bool semi_coherent = false);

struct CoronaOptions {
  double packing_cap = 8.0;
};

// Greedy top-down stopping time; throws std::runtime_error when the result cannot be packed under the cap
// or no cube is approximated at all.
CoronaDecomposition build_corona(const DyadicTree& tree, const ApproximantCatalog& catalog, double eta, double K,
                                 const CoronaOptions& opts = {});

nlohmann::json to_json(const CoronaDecomposition& corona);
nlohmann::json to_json(const CoronaReport& report);
CoronaDecomposition corona_from_json(const DyadicTree& tree, const nlohmann::json& j);

}  // namespace gmt
