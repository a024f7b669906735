#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmt/beta.hpp"
#include "gmt/bigpieces.hpp"
#include "gmt/corona.hpp"
#include "gmt/dyadic.hpp"
#include "gmt/space.hpp"

namespace gmt {

// Uniform grid over [0, nx dx)^{spatial_dims} x [0, nt dt). Nodes are stored with the spatial
// multi-index in lexicographic order and time fastest.
struct GridShape {
  int spatial_dims = 1;
  int nx = 1;
  int nt = 1;
  double dx = 1.0;
  double dt = 1.0;

  std::size_t spatial_nodes() const;
  std::size_t size() const { return spatial_nodes() * static_cast<std::size_t>(nt); }
};

// psi : R^{n-1} x R -> R sampled on a grid with dt = dx^2; the graph lives in R^{n+1} with
// coordinates (x, psi(x, t), t).
struct Lip112Graph {
  int n = 2;
  GridShape grid;
  std::vector<double> psi;
  double lip_constant = 0.0;  // measured sup |psi(x,t) - psi(y,s)| / (|x-y| + |t-s|^{1/2})

  double at(std::size_t spatial, int j) const { return psi[spatial * static_cast<std::size_t>(grid.nt) + static_cast<std::size_t>(j)]; }
  // Graph cloud with weights dx^{n-1} dt and d = n + 1.
  WeightedSet cloud() const;
};

// Samples psi on nx spatial nodes per axis over [0, length) and time [0, time_length) with dt = dx^2.
Lip112Graph sample_graph(int n, const std::function<double(const double*, double)>& psi, int nx, double length,
                         double time_length);

// Spatial Lipschitz constant: sup of the forward-difference gradient norm over nodes.
double spatial_lipschitz(const Lip112Graph& g);
// sup over nodes x and all time pairs of |psi(x,t) - psi(x,s)| / |t - s|^{1/2}.
double time_holder(const Lip112Graph& g);
// max of the two, which equals the grid Lip(1,1/2) constant.
double lip112_constant(const Lip112Graph& g);

// The normalizing constant making the singular integral the |tau|^{1/2} Fourier multiplier.
double half_derivative_constant();

// D^t_{1/2} of one row f (zero outside the grid) with time step dt.
std::vector<double> half_derivative_row(const std::vector<double>& f, double dt);

// D^t_{1/2} psi at every node. Throws std::invalid_argument unless psi vanishes at the first and
// last time node of every row (compact support in time).
std::vector<double> half_time_derivative(const Lip112Graph& g);

// Ratio of the discrete operator to the exact value on the Gaussian exp(-t^2/2) at t = 0.
double half_derivative_calibration(double dt);

struct BmoResult {
  double norm = 0.0;
  int level = -1;                // box side nx dx 2^{-level}
  std::vector<int> spatial_origin;
  int time_origin = -1;
};

// sup of mean oscillation over the dyadic parabolic boxes (side r, time length r^2) of the grid.
BmoResult parabolic_bmo_norm(const std::vector<double>& field, const GridShape& grid);

struct GpgReport {
  double b1 = 0.0;
  double b2 = 0.0;
  double lip_constant = 0.0;
  BmoResult bmo;
  bool ok = true;
};

// Regular parabolic graph parameters measured on the grid; ok iff both are finite and within the caps.
GpgReport gpg_check(const Lip112Graph& g, double b1_cap = kInfQ, double b2_cap = kInfQ);

// omega(tau) = C min{(tau / log(1/tau))^{1/2}, 1}, with omega = C for tau >= 1.
double lewis_silver_modulus(double tau, double C);

struct LewisSilverGraph {
  Lip112Graph graph;
  std::vector<double> g;      // the time factor on the grid
  double scale = 0.0;         // factor applied to the raw series to meet the modulus bound
  std::uint64_t seed = 0;
};

// psi(x, t) = phi(x) g(t) with phi a smooth bump on [0, 1)^{n-1} and g a random-sign lacunary series
// times a smooth time window, scaled so its grid modulus is at most omega. nx spatial nodes, time
// [0, 1) with dt = dx^2. Rejects n < 2.
LewisSilverGraph lewis_silver_graph(int n, double C, int nx, std::uint64_t seed);

struct ModulusReport {
  double worst_ratio = 0.0;  // max over lags of oscillation / omega
  double worst_lag = 0.0;
};
// Exhaustive pair scan of the modulus of a sampled function of t.
ModulusReport modulus_check(const std::vector<double>& g, double dt, double C);

// min{(log(1/l))^{-1/2}, 1/l}, with the first term dropped when l >= 1.
double observation_bound(double side);

struct ObservationSample {
  int cube = -1;
  int level = 0;
  double side = 0.0;
  double bbeta = 0.0;
  double bound = 0.0;
};

struct EpsilonWindow {
  double eps = 0.0;
  double lower = 0.0;  // exp(-(C_n / eps)^2)
  double upper = 0.0;  // C_n / eps
  int above = 0;       // cubes with bbeta > eps
  int violations = 0;  // of those, side outside [lower, upper]
};

struct ObservationOptions {
  std::vector<double> eps{0.05, 0.1, 0.2};
  int cubes_per_level = 64;  // evenly spaced sample of each level (all cubes when fewer)
  BetaOptions beta;
};

struct ObservationReport {
  double C_n = 0.0;
  int witness = -1;
  std::vector<ObservationSample> samples;
  std::vector<EpsilonWindow> windows;
  bool ok = true;
};

// Bilateral beta over parabolic planes against the bound C_n min{(log 1/l)^{-1/2}, 1/l} with C_n
// the measured worst ratio, then the generation window for each eps.
ObservationReport observation_check(const DyadicTree& tree, const ObservationOptions& opts = {});

// Cubes analysed by the sampled checks: every level, evenly spaced ids, at most per_level each.
std::vector<int> sample_cubes(const DyadicTree& tree, int per_level);

struct GraphChainReport {
  double K = 0.0;
  double c = 0.0;        // max bbeta(Q) / beta(KQ)
  double median = 0.0;   // median ratio
  int witness = -1;
  int cubes = 0;
  int degenerate = 0;    // beta(KQ) = 0 while bbeta(Q) > 0
  bool ok = true;
};

// bbeta(Q) <= c beta(KQ) over parabolic planes, where beta(KQ) is the sup beta on the K-fold
// enlargement of 2Q normalized by diam(Q).
GraphChainReport graph_bbeta_chain(const DyadicTree& tree, double K, int cubes_per_level = 64,
                                   const BetaOptions& opts = {});

struct RefinementStep {
  int nx = 0;
  std::size_t points = 0;
  std::size_t cubes = 0;
  double glem = 0.0;  // measured GLem(parabolic planes, 2, 2) constant
  double b2 = 0.0;    // BMO norm of the half derivative
};

struct RefinementReport {
  std::vector<RefinementStep> steps;
  bool glem_increasing = true;
  bool b2_increasing = true;
};

RefinementReport glem_refinement(const std::function<Lip112Graph(int)>& make, const std::vector<int>& resolutions,
                                 const TreeOptions& tree_opts = {}, const BetaOptions& beta_opts = {});

class PipelineError : public std::runtime_error {
 public:
  PipelineError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PurOptions {
  double eta = 0.1;
  double K = 2.0;
  double theta = 0.0;  // 0 selects the measured big-piece constant of E
  std::vector<double> eps{0.05, 0.1, 0.2};
  double chain_K = 4.0;
  RegularityOptions regularity{8, {}, 2048};
  TreeOptions tree;
  Bp2Options bp2;
  TransferOptions transfer;
};

struct PurReport {
  bool ok = true;
  RegularityReport regularity;
  std::size_t cubes = 0;
  CoronaReport corona;
  Bp2Certificate bp2;
  TransferReport transfer;
  std::vector<GeometricLemmaReport> wgl, bwgl;  // one per eps
  std::vector<GraphChainReport> member_chains;  // catalog members used as big pieces
  std::vector<std::string> messages;
};

// Parabolic pipeline: regularity, corona, BP^2 certificate, transfer of GLem(P, 2, 2) and the
// WGL / BWGL constants at each eps. Sub-step failures throw PipelineError tagged with the stage.
PurReport pur_pipeline(const WeightedSet& E, const std::vector<WeightedSet>& catalog, const PurOptions& opts = {});

std::string graph_csv(const Lip112Graph& g);

nlohmann::json to_json(const GpgReport& r);
nlohmann::json to_json(const ObservationReport& r);
nlohmann::json to_json(const GraphChainReport& r);
nlohmann::json to_json(const RefinementReport& r);
nlohmann::json to_json(const PurReport& r);

}  // namespace gmt
