#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "gmt/dyadic.hpp"

namespace gmt {

// Coefficients alpha_Q >= 0 on the cubes of a tree; the tree must outlive the measure.
struct DiscreteMeasure {
  const DyadicTree* tree = nullptr;
  std::vector<double> alpha;  // indexed by cube id

  DiscreteMeasure() = default;
  DiscreteMeasure(const DyadicTree& t, std::vector<double> coefficients);
  static DiscreteMeasure zero(const DyadicTree& t) { return DiscreteMeasure(t, std::vector<double>(t.cubes.size(), 0.0)); }
};

// m(D') = sum of alpha over the listed cubes (duplicates count once).
double measure_of(const DiscreteMeasure& m, const std::vector<int>& cubes);

struct NormResult {
  double value = 0.0;
  int witness = -1;  // cube attaining the supremum
};

constexpr int kGlobal = -1;

// sup over Q in D_{Q0} (every cube when q0 == kGlobal) of m_F(D_Q) / mu(Q), where m_F keeps only
// cubes not contained in a member of the disjoint family F. Cubes lighter than 1e-12 of the total
// mass are left out of the supremum.
NormResult carleson_norm(const DiscreteMeasure& m, const std::vector<int>& family, int q0 = kGlobal);

struct PackingResult {
  bool ok = true;
  double worst_ratio = 0.0;
  int witness = -1;
  double bound = 0.0;
};

// sum over marked Q' inside Q of mu(Q') <= C_pack mu(Q) for every cube Q.
PackingResult packing_check(const DyadicTree& tree, const std::vector<int>& marked, double c_pack);

// Declared constant of the extrapolation construction: ||m_F||_C(Q) <= kExtrapolationConstant * b.
constexpr double kExtrapolationConstant = 2.0;

struct ExtrapolationResult {
  std::vector<int> family;
  double sawtooth_norm = 0.0;
  double bad_union_mass = 0.0;
  std::vector<int> bad_subfamily;
  double cube_mass = 0.0;
  double norm_bound = 0.0;        // C * b
  double mass_ratio_bound = 0.0;  // (a + b) / (a + 2b)
  double a = 0.0, b = 0.0;
};

// Stopping-time decomposition below Q: F collects the maximal cubes Q' of D_Q (Q itself included)
// where the chain sum of alpha_{Q''} / mu(Q'') over Q' <= Q'' <= Q exceeds 2b. Both conclusions
// are certified before returning; a failed certificate throws std::runtime_error.
ExtrapolationResult extrapolate(const DiscreteMeasure& m, int q, double a, double b);

nlohmann::json to_json(const ExtrapolationResult& r);
nlohmann::json to_json(const PackingResult& r);

// CSV "cube_id,alpha".
DiscreteMeasure read_alpha_csv(const DyadicTree& tree, const std::string& path);
void write_alpha_csv(const DiscreteMeasure& m, const std::string& path);

}  // namespace gmt
