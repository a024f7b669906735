#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmt/carleson.hpp"
#include "gmt/corona.hpp"
#include "gmt/dyadic.hpp"
#include "gmt/space.hpp"

namespace gmt {

// A point of E "lies on" a catalog set when it is within this distance of it.
inline double matching_radius(const WeightedSet& E) { return 2.0 * E.r_min(); }

struct BPWitness {
  int cube = -1;
  int approximant = -1;
  double intersection_mass = 0.0;
  double theta = 0.0;  // intersection_mass / mu(Q)
};

struct BPCheckResult {
  bool ok = true;
  double theta = 0.0;          // requested
  double min_theta = 0.0;      // smallest achieved value over all cubes
  int failing_cube = -1;       // first cube below theta
  std::vector<BPWitness> witnesses;  // one per cube, best member
};

// Cube version of big pieces: for every cube Q some member with mu(Q ∩ Gamma) >= theta mu(Q).
// hints[c], when given, is tried first for cube c and accepted if it reaches theta.
// delta <= 0 selects matching_radius.
BPCheckResult bp_check(const DyadicTree& tree, const std::vector<WeightedSet>& catalog, double theta,
                       const std::vector<int>& hints = {}, double delta = 0.0);

// Ball version: min over the probes (x, r) of max over members of mu(Gamma ∩ E ∩ B(x, r)) / r^d.
struct BallBPResult {
  double min_theta = 0.0;
  int worst_center = -1;
  double worst_radius = 0.0;
};
BallBPResult bp_ball_check(const WeightedSet& E, const std::vector<WeightedSet>& catalog,
                           const std::vector<int>& centers, const std::vector<double>& radii,
                           double delta = 0.0);

// Gamma_S(Q): the localization of a regime's approximant around a point X_Q near x_Q.
struct LocalizedGraph {
  WeightedSet set;
  std::vector<int> ids;  // indices into the approximant
  int anchor = -1;       // X_Q
  double radius = 0.0;   // C0 l(Q)
  double still_close_ratio = 0.0;  // worst sup_{KQ'} dist / (eta l(Q')) over checked Q'
};

struct LocalizeGraphOptions {
  bool check_still_close = true;
  double tolerance = 0.0;  // absolute slack on distances
  const std::vector<std::vector<int>>* dilations = nullptr;  // KQ per cube, computed when absent
};

LocalizedGraph localize_graph(const WeightedSet& approximant, const DyadicTree& tree, int cube,
                              const StoppingRegime& regime, double C0, double eta, double K,
                              const LocalizeGraphOptions& opts = {});

// True iff every cube containing x from Q0 down to the finest level belongs to Q0's regime.
bool nested_chain_membership(const CoronaDecomposition& corona, int point, int q0);

class SawtoothRegimeError : public std::runtime_error {
 public:
  SawtoothRegimeError(const std::string& what, int witness) : std::runtime_error(what), witness_(witness) {}
  int witness() const { return witness_; }

 private:
  int witness_;
};

// Discrete measure with alpha_Q = mu(Q) on maximal and bad cubes, 0 elsewhere.
DiscreteMeasure corona_measure(const CoronaDecomposition& corona);

// The regime S0 holding Q0 and every cube of the sawtooth D_{F,Q0}; throws SawtoothRegimeError otherwise.
int regime_of_sawtooth(const CoronaDecomposition& corona, const DiscreteMeasure& m, int q0,
                       const std::vector<int>& family);

struct SeparatedFamily {
  std::vector<int> selected;
  double input_mass = 0.0;
  double retained_mass = 0.0;
  double retained_fraction = 0.0;
};

// Greedy largest-first: a cube is kept iff its distance to every kept cube is at least
// sep_factor * max of the two side lengths.
SeparatedFamily separated_subfamily(const DyadicTree& tree, const std::vector<int>& cubes, double sep_factor);

struct Bp2Options {
  double C0 = 0.0;     // 0 selects the default from eta, K and the measured C1
  double b = 0.0;      // 0 selects 1 / (4 C) with C the declared extrapolation constant
  int base_levels = 2; // cubes this close to the finest level are base cases
  int probe_centers = 24;
  int radii_per_octave = 4;
  bool fail_fast = false;
};

struct CubeCertificate {
  int cube = -1;
  bool star = false;  // H* construction (global) rather than H (local)
  int rung = 0;
  std::string case_label;
  int regime = -1;
  std::vector<int> family;
  std::vector<int> separated;
  int child = -1;
  std::size_t set_size = 0;
  // Measured constants.
  double containment_ratio = 0.0;  // max dist(x_Q0, F) / (20 C0 l(Q0)), H only
  double c_diam = 0.0;             // diam(F) / l(Q0)
  double C_reg = 0.0;              // two-sided regularity constant on the probes
  double theta = 0.0;              // big-piece constant on the probes
  double c_mass = 0.0;             // mu(F ∩ Q0) / mu(Q0)
  int t1_max_terms = 0;            // largest number of nonzero T1 terms seen
  int lower_cases[3] = {0, 0, 0};  // probes falling in cases alpha, beta, gamma
  double lemma_a_ratio = 0.0;      // worst dist(x, Gamma_S0(Q0)) / tolerance over x in A
  bool ok = true;
  std::vector<std::string> failures;
};

struct RungConstants {
  double a = 0.0;
  int cubes = 0;
  double c_diam = 0.0, C_reg = 0.0, theta = 0.0, c_mass = 0.0;
};

struct Bp2Certificate {
  bool ok = true;
  double C0 = 0.0, b = 0.0, eta = 0.0, K = 0.0, packing_constant = 0.0, delta_match = 0.0, C1 = 0.0;
  std::vector<double> ladder;
  std::vector<CubeCertificate> cubes;  // H* record per cube, then any H records used
  std::vector<RungConstants> rungs;    // cumulative (monotone) constants along the ladder
  BPCheckResult final_check;           // E against the H* sets
  double theta_prime = 0.0;
  std::vector<std::string> failures;
};

class Bp2Failure : public std::runtime_error {
 public:
  Bp2Failure(const std::string& what, int cube) : std::runtime_error(what), cube_(cube) {}
  int cube() const { return cube_; }

 private:
  int cube_;
};

// Runs the induction ladder on every cube and certifies BP^2. With fail_fast, the first violated
// clause throws Bp2Failure; otherwise violations are collected in the certificate.
Bp2Certificate corona_to_bp2(const DyadicTree& tree, const CoronaDecomposition& corona,
                             const ApproximantCatalog& catalog, const Bp2Options& opts = {});

double default_C0(double eta, double K, double C1);

nlohmann::json to_json(const Bp2Certificate& cert);
nlohmann::json to_json(const BPCheckResult& r);

}  // namespace gmt
