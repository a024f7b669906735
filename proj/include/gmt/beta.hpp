#pragma once

#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmt/bigpieces.hpp"
#include "gmt/carleson.hpp"
#include "gmt/corona.hpp"
#include "gmt/dyadic.hpp"
#include "gmt/space.hpp"

namespace gmt {

enum class FamilyKind {
  affine_planes,     // affine plane_dim-planes of a Euclidean R^n
  parabolic_planes,  // hyperplanes of R^n x R containing a line parallel to the t-axis
  explicit_sets,     // a finite list of sampled sets
};

struct PlaneFamily {
  FamilyKind kind = FamilyKind::affine_planes;
  int plane_dim = 1;
  std::vector<WeightedSet> sets;

  static PlaneFamily affine(int plane_dim) { return {FamilyKind::affine_planes, plane_dim, {}}; }
  static PlaneFamily parabolic() { return {FamilyKind::parabolic_planes, 0, {}}; }
  static PlaneFamily explicit_sets(std::vector<WeightedSet> s) { return {FamilyKind::explicit_sets, 0, std::move(s)}; }
  std::string name() const;
};

// Affine plane {y : normals^T (y - origin) = 0} in stored coordinates. Parabolic planes keep a zero
// time component in every normal, so the same formula gives the parabolic distance.
struct Plane {
  std::vector<double> origin;
  std::vector<std::vector<double>> normals;
  double distance(const double* y) const;
};

constexpr double kInfQ = std::numeric_limits<double>::infinity();

struct BetaValue {
  int cube = -1;
  double q = 2.0;
  double value = 0.0;
  double normalized = 0.0;  // same integral normalized by mu(2Q) instead of mu(Q)
  Plane plane;              // minimizer for plane families
  int set_id = -1;          // minimizer for explicit families
  bool heuristic = false;   // achieved value of a local search, not a certified infimum
  double first_term = 0.0;  // bilateral only: the unilateral sup part
  double second_term = 0.0; // bilateral only: sup over the plane of dist to E
};

struct BetaOptions {
  double kappa = 2.0;       // dilation of Q
  int offset_steps = 17;
  int refine_rounds = 8;
  int max_iterations = 50;  // IRLS cap for q != 2
  int restarts = 3;
  int bilateral_candidates = 8;
  int plane_grid = 8;       // half-width (in steps) of the sampling grid on a plane
  int max_projections = 4096;  // evenly strided projections of 2Q used to sample a plane
  // Restrict the reverse supremum of the bilateral beta to the sampling window of E (its bounding
  // box in the principal frame); a finite sample says nothing about E beyond its window.
  bool clip_to_window = true;
};

BetaValue beta_q(const DyadicTree& tree, int cube, const PlaneFamily& family, double q, const BetaOptions& opts = {});
BetaValue beta_inf(const DyadicTree& tree, int cube, const PlaneFamily& family, const BetaOptions& opts = {});
// beta_inf restricted to planes through x_Q.
BetaValue beta_inf_centered(const DyadicTree& tree, int cube, const PlaneFamily& family, const BetaOptions& opts = {});
BetaValue bbeta(const DyadicTree& tree, int cube, const PlaneFamily& family, const BetaOptions& opts = {});

enum class BetaKind { lq, sup, bilateral };

// One value per cube, indexed by cube id (q ignored unless kind == lq).
std::vector<BetaValue> beta_table(const DyadicTree& tree, const PlaneFamily& family, BetaKind kind, double q = 2.0,
                                  const BetaOptions& opts = {});

// Values for a subset of cubes, in the given order.
std::vector<BetaValue> beta_values(const DyadicTree& tree, const std::vector<int>& cubes, const PlaneFamily& family,
                                   BetaKind kind, double q = 2.0, const BetaOptions& opts = {});

// CSV "cube_id,k,q,beta,plane_params..." (origin then normals; set id for explicit families).
std::string beta_table_csv(const DyadicTree& tree, const std::vector<BetaValue>& table);

struct GeometricLemmaReport {
  std::string lemma;  // "GLem", "WGL" or "BWGL"
  bool ok = true;
  double worst_ratio = 0.0;
  int witness = -1;
  double bound = 0.0;
  double p = 0.0, q = 0.0, eps = 0.0;
};

// Carleson sums over every root from a precomputed table.
GeometricLemmaReport glem_check(const DyadicTree& tree, const std::vector<BetaValue>& table, double p, double M);
GeometricLemmaReport wglem_check(const DyadicTree& tree, const std::vector<BetaValue>& sup_table, double eps, double M_eps);
GeometricLemmaReport bwglem_check(const DyadicTree& tree, const std::vector<BetaValue>& bilateral_table, double eps,
                                  double M_eps);

// Convenience forms computing the table.
GeometricLemmaReport glem_check(const DyadicTree& tree, const PlaneFamily& family, double p, double q, double M,
                                const BetaOptions& opts = {});
GeometricLemmaReport wglem_check(const DyadicTree& tree, const PlaneFamily& family, double eps, double M_eps,
                                 const BetaOptions& opts = {});
GeometricLemmaReport bwglem_check(const DyadicTree& tree, const PlaneFamily& family, double eps, double M_eps,
                                  const BetaOptions& opts = {});

struct CompanionOptions {
  double lower = 10.0;  // diam(companion) >= lower * diam(Q)
  double upper = 64.0;  // diam(companion) <= upper * diam(Q)
  double delta = 0.0;   // matching radius, <= 0 selects 2 r_min of E
};

// Finest cube of the other tree meeting Q with diameter in [lower, upper] * diam(Q); ties by id.
// Throws std::invalid_argument when Q misses the other set and std::runtime_error when no level fits.
int companion_cube(const DyadicTree& tree, const DyadicTree& other, int cube, const CompanionOptions& opts = {});

struct MultiplicityReport {
  int max_multiplicity = 0;  // largest number of cubes sharing one companion
  int witness = -1;          // that companion
  int bound = 0;             // exhaustive count of cubes within the diameter window meeting it
  bool ok = true;
};
MultiplicityReport companion_multiplicity(const DyadicTree& tree, const DyadicTree& other,
                                          const std::vector<int>& companions, const CompanionOptions& opts = {});

// I_q(Q) of a cube of `tree` relative to the set `target`: dist(z, target)/diam(Q) averaged over
// z in 2Q with dist < 2 diam(Q), normalized by mu(Q); q = inf gives the sup. Points within
// `exclude_within` of target are skipped (they lie on it).
double i_numbers(const DyadicTree& tree, const WeightedSet& target, int cube, double q, double exclude_within = 0.0,
                 double kappa = 2.0);

struct ComparisonStat {
  std::string name;
  double constant = 0.0;  // max lhs / rhs over pairs with rhs > 0
  int worst_cube = -1;
  int pairs = 0;
  int degenerate = 0;  // rhs == 0 with lhs above tolerance
};

struct TransferOptions {
  double p = 2.0;
  double q = 2.0;
  double eps = 0.1;
  double tolerance = 1e-9;
  BetaOptions beta;
  CompanionOptions companion;
  TreeOptions member_tree;
};

struct TransferReport {
  bool ok = true;
  double theta = 0.0;
  BPCheckResult bp;
  std::vector<int> members;  // catalog members used as big pieces
  std::vector<double> member_glem, member_wgl, member_bwgl;
  ComparisonStat lq, sup, bilateral;
  MultiplicityReport multiplicity;
  GeometricLemmaReport glem, wgl, bwgl;
  double eps_wgl = 0.0, eps_bwgl = 0.0;
  std::vector<std::string> messages;
};

// True iff 1/q - 1/p + 1/d > 0.
bool transfer_gate(double p, double q, double d);

TransferReport transfer_check(const DyadicTree& tree, const ApproximantCatalog& catalog, const PlaneFamily& family,
                              double theta, const TransferOptions& opts = {});

nlohmann::json to_json(const BetaValue& v);
nlohmann::json to_json(const GeometricLemmaReport& r);
nlohmann::json to_json(const TransferReport& r);

}  // namespace gmt
