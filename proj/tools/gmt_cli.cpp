#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "gmt/beta.hpp"
#include "gmt/bigpieces.hpp"
#include "gmt/carleson.hpp"
#include "gmt/corona.hpp"
#include "gmt/dyadic.hpp"
#include "gmt/fixtures.hpp"
#include "gmt/parabolic.hpp"
#include "gmt/parallel.hpp"
#include "gmt/space.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kPass = 0, kVerdict = 2, kInput = 3, kNumeric = 4 };

// Raised for configuration problems found before any computation.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string subcommand;
  std::string input;
  std::vector<std::string> catalog;
  std::string out_dir = ".";
  std::string report;  // defaults to <out_dir>/<subcommand>_report.json

  // gen
  std::string kind = "plane";
  std::string name;
  int n = 2;
  int dim = 1;
  double lambda = 0.5;
  double length = 1.0;
  double spacing = 1.0 / 64;
  double gap = 0.25;
  int facets = 4;
  double slope = 0.0;
  double x0 = 0.0;
  double margin = 0.0;
  double time_length = 1.0;
  int nx = 32;
  double modulus_C = 1.0;
  double amplitude = 0.25;
  double offset = 0.0;

  // analysis
  std::optional<double> r_min, r_max;
  std::optional<int> k_min, k_max;
  std::string family = "affine";
  int plane_dim = 1;
  std::string beta_kind = "lq";
  double eta = 0.1;
  double K = 2.0;
  double theta = 0.0;
  double p = 2.0;
  std::string q = "2";
  double eps = 0.1;
  double M = std::numeric_limits<double>::infinity();
  std::string mode = "lewis-silver";
  std::vector<int> refine;
  int cubes_per_level = 64;

  std::uint64_t seed = 1;
  bool seed_from_env = false;
  int jobs = 0;
  bool fail_fast = false;

  std::vector<std::string> reports;  // report subcommand inputs
};

double parse_q(const std::string& s) {
  if (s == "inf" || s == "infinity") return gmt::kInfQ;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw InputError("q must be a number or 'inf', got '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw InputError("q must be a number or 'inf', got '" + s + "'");
  }
}

json num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

json config_json(const RunConfig& c) {
  json j;
  j["subcommand"] = c.subcommand;
  j["input"] = c.input;
  j["catalog"] = c.catalog;
  j["out_dir"] = c.out_dir;
  j["report"] = c.report;
  j["seed"] = c.seed;
  j["seed_source"] = c.seed_from_env ? "GMT_SEED" : "flag";
  j["jobs"] = c.jobs;
  j["fail_fast"] = c.fail_fast;
  if (c.subcommand == "gen") {
    j["kind"] = c.kind;
    j["name"] = c.name;
    j["n"] = c.n;
    j["dim"] = c.dim;
    j["lambda"] = c.lambda;
    j["length"] = c.length;
    j["spacing"] = c.spacing;
    j["gap"] = c.gap;
    j["facets"] = c.facets;
    j["slope"] = c.slope;
    j["x0"] = c.x0;
    j["margin"] = c.margin;
    j["time_length"] = c.time_length;
    j["nx"] = c.nx;
    j["modulus_C"] = c.modulus_C;
    j["amplitude"] = c.amplitude;
    j["offset"] = c.offset;
  } else {
    j["r_min"] = c.r_min ? json(*c.r_min) : json(nullptr);
    j["r_max"] = c.r_max ? json(*c.r_max) : json(nullptr);
    j["k_min"] = c.k_min ? json(*c.k_min) : json(nullptr);
    j["k_max"] = c.k_max ? json(*c.k_max) : json(nullptr);
    j["family"] = c.family;
    j["plane_dim"] = c.plane_dim;
    j["beta_kind"] = c.beta_kind;
    j["eta"] = c.eta;
    j["K"] = c.K;
    j["theta"] = c.theta;
    j["p"] = c.p;
    j["q"] = c.q;
    j["eps"] = c.eps;
    j["M"] = num(c.M);
    j["mode"] = c.mode;
    j["refine"] = c.refine;
    j["nx"] = c.nx;
    j["modulus_C"] = c.modulus_C;
    j["cubes_per_level"] = c.cubes_per_level;
    j["reports"] = c.reports;
  }
  return j;
}

void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw InputError(what);
  };
  need(c.jobs >= 0, "--jobs must be >= 0");
  if (c.subcommand == "gen") {
    need(c.n >= 1 && c.dim >= 1 && c.dim <= c.n, "gen needs 1 <= dim <= n");
    need(c.length > 0 && c.spacing > 0 && c.spacing < c.length, "gen needs 0 < spacing < length");
    need(c.lambda >= 0, "--lambda must be >= 0");
    need(c.gap > 0, "--gap must be positive");
    need(c.facets >= 1, "--facets must be >= 1");
    need(c.nx >= 4, "--nx must be >= 4");
    need(c.modulus_C > 0, "--C must be positive");
    need(c.margin >= 0 && c.time_length > 0, "gen needs margin >= 0 and time_length > 0");
    return;
  }
  if (c.subcommand == "report") {
    need(!c.reports.empty(), "report needs at least one input report");
    return;
  }
  if (!(c.subcommand == "parabolic" && c.mode == "lewis-silver")) need(!c.input.empty(), "--input is required");
  if (c.r_min || c.r_max) need(c.r_min && c.r_max && *c.r_min > 0 && *c.r_max > *c.r_min,
                               "--r-min and --r-max must be given together with 0 < r_min < r_max");
  need(c.eta > 0 && c.eta < 1, "--eta must lie in (0, 1)");
  need(c.K >= 2, "--K must be >= 2");
  need(c.theta >= 0 && c.theta <= 1, "--theta must lie in [0, 1]");
  need(c.p >= 1, "--p must be >= 1");
  need(parse_q(c.q) >= 1, "--q must be >= 1");
  need(c.eps > 0 && c.eps < 1, "--eps must lie in (0, 1)");
  need(c.M > 0, "--M must be positive");
  need(c.plane_dim >= 1, "--plane-dim must be >= 1");
  need(c.cubes_per_level >= 1, "--cubes-per-level must be >= 1");
  for (const std::string& path : c.catalog) need(fs::exists(path), "catalog file not found: " + path);
  if (!c.input.empty()) need(fs::exists(c.input), "input file not found: " + c.input);
  if (c.subcommand == "corona" || c.subcommand == "bp2" || c.subcommand == "transfer")
    need(!c.catalog.empty(), c.subcommand + " needs --catalog");
  if (c.subcommand == "parabolic") {
    need(c.mode == "lewis-silver" || c.mode == "pipeline", "--mode must be lewis-silver or pipeline");
    if (c.mode == "pipeline") need(!c.catalog.empty(), "parabolic pipeline needs --catalog");
    need(c.nx >= 8, "--nx must be >= 8");
    for (int r : c.refine) need(r >= 8, "--refine resolutions must be >= 8");
  }
}

gmt::WeightedSet load_input(const RunConfig& c, const std::string& path) {
  gmt::WeightedSet s = gmt::read_cloud(path, gmt::sidecar_path_for(path));
  if (c.r_min) s = s.with_scale_range(*c.r_min, *c.r_max);
  return s;
}

std::vector<gmt::WeightedSet> load_catalog(const RunConfig& c) {
  std::vector<gmt::WeightedSet> out;
  for (const std::string& path : c.catalog) out.push_back(gmt::read_cloud(path, gmt::sidecar_path_for(path)));
  return out;
}

gmt::TreeOptions tree_options(const RunConfig& c) {
  gmt::TreeOptions t;
  t.k_min = c.k_min;
  t.k_max = c.k_max;
  return t;
}

gmt::PlaneFamily plane_family(const RunConfig& c, const gmt::WeightedSet& E) {
  if (c.family == "affine") return gmt::PlaneFamily::affine(c.plane_dim);
  if (c.family == "parabolic") {
    if (!E.metric().is_parabolic()) throw InputError("parabolic planes need a parabolic cloud");
    return gmt::PlaneFamily::parabolic();
  }
  throw InputError("--family must be affine or parabolic");
}

gmt::BetaKind beta_kind(const std::string& s) {
  if (s == "lq") return gmt::BetaKind::lq;
  if (s == "sup") return gmt::BetaKind::sup;
  if (s == "bilateral") return gmt::BetaKind::bilateral;
  throw InputError("--kind must be lq, sup or bilateral");
}

json cloud_summary(const gmt::WeightedSet& s) {
  return {{"metric", s.metric().name()}, {"n", s.metric().n}, {"points", s.size()}, {"d", s.d()},
          {"r_min", s.r_min()}, {"r_max", s.r_max()}, {"total_mass", s.total_mass()}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Outcome of one subcommand: verdict plus the payload stored under "result".
struct Outcome {
  bool pass = true;
  json result = json::object();
  std::vector<std::string> artifacts;
};

double gpg_psi(const RunConfig& c, const double* x, double t) {
  double phi = 1.0;
  for (int a = 0; a < c.n - 1; ++a) {
    const double s = 2.0 * x[a] - 1.0;
    phi *= std::abs(s) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0;
  }
  const double s = 2.0 * t / c.time_length - 1.0;
  const double g = std::abs(s) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0;
  return c.amplitude * phi * g;
}

Outcome run_gen(const RunConfig& c) {
  Outcome o;
  const std::string name = c.name.empty() ? c.kind : c.name;
  const fs::path csv = fs::path(c.out_dir) / (name + ".csv");
  gmt::SampleSpec spec{c.length, c.spacing, 0.0, 0.0};
  gmt::WeightedSet set;
  json extra = json::object();

  if (c.kind == "plane") {
    set = gmt::flat_cloud(c.n, c.dim, spec, c.offset);
  } else if (c.kind == "staircase-lines") {
    // One cloud per facet line: <name>_<i>.csv.
    const std::vector<gmt::WeightedSet> lines = gmt::staircase_facet_lines(c.lambda, c.facets, spec, c.margin);
    json members = json::array();
    gmt::RegularityOptions ropts;
    ropts.max_centers = 2048;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const fs::path path = fs::path(c.out_dir) / fmt::format("{}_{}.csv", name, i);
      gmt::write_cloud(lines[i], path.string(), gmt::sidecar_path_for(path.string()));
      o.artifacts.push_back(path.string());
      o.artifacts.push_back(gmt::sidecar_path_for(path.string()));
      const gmt::RegularityReport reg = gmt::regularity_check(lines[i], ropts);
      o.pass = o.pass && reg.ok;
      members.push_back({{"cloud", cloud_summary(lines[i])}, {"regularity", gmt::to_json(reg)}});
    }
    o.result = {{"members", members}};
    return o;
  } else if (c.kind == "line") {
    set = gmt::flat_cloud(c.n, 1, spec);
  } else if (c.kind == "lipschitz") {
    set = gmt::lipschitz_graph(c.dim, c.lambda, spec, c.seed);
  } else if (c.kind == "two-planes") {
    set = gmt::two_planes(c.n, c.dim, spec, c.gap);
  } else if (c.kind == "staircase") {
    set = gmt::staircase(c.lambda, c.facets, spec);
  } else if (c.kind == "parabolic-plane") {
    set = gmt::parabolic_plane_patch(c.slope, c.x0, spec, c.time_length, c.margin);
  } else if (c.kind == "gpg" || c.kind == "lewis-silver") {
    if (c.n < 2) throw InputError(c.kind + " needs n >= 2");
    gmt::Lip112Graph g;
    if (c.kind == "gpg") {
      g = gmt::sample_graph(c.n, [&](const double* x, double t) { return gpg_psi(c, x, t); }, c.nx, 1.0,
                            c.time_length);
      const gmt::GpgReport gpg = gmt::gpg_check(g);
      extra["gpg"] = gmt::to_json(gpg);
      o.pass = o.pass && gpg.ok;
    } else {
      const gmt::LewisSilverGraph ls = gmt::lewis_silver_graph(c.n, c.modulus_C, c.nx, c.seed);
      g = ls.graph;
      const gmt::ModulusReport mod = gmt::modulus_check(ls.g, g.grid.dt, c.modulus_C);
      extra["modulus"] = {{"worst_ratio", mod.worst_ratio}, {"worst_lag", mod.worst_lag}, {"scale", ls.scale}};
      o.pass = o.pass && mod.worst_ratio <= 1.0 + 1e-9;
    }
    extra["lip_constant"] = g.lip_constant;
    const fs::path grid = fs::path(c.out_dir) / (name + "_psi.csv");
    write_text(grid, gmt::graph_csv(g));
    o.artifacts.push_back(grid.string());
    set = g.cloud();
  } else {
    throw InputError("unknown gen kind '" + c.kind + "'");
  }

  gmt::write_cloud(set, csv.string(), gmt::sidecar_path_for(csv.string()));
  o.artifacts.push_back(csv.string());
  o.artifacts.push_back(gmt::sidecar_path_for(csv.string()));

  gmt::RegularityOptions ropts;
  ropts.max_centers = 2048;
  const gmt::RegularityReport reg = gmt::regularity_check(set, ropts);
  o.pass = o.pass && reg.ok;
  o.result = {{"cloud", cloud_summary(set)}, {"regularity", gmt::to_json(reg)}};
  o.result.update(extra);
  return o;
}

Outcome run_cubes(const RunConfig& c) {
  Outcome o;
  const gmt::WeightedSet E = load_input(c, c.input);
  const gmt::DyadicTree tree = gmt::build_tree(E, tree_options(c));
  const gmt::GridReport grid = gmt::validate_grid(tree);
  const fs::path jsonl = fs::path(c.out_dir) / "cubes.jsonl";
  write_text(jsonl, gmt::tree_to_jsonl(tree));
  o.artifacts.push_back(jsonl.string());
  o.pass = grid.ok;
  o.result = {{"cloud", cloud_summary(E)},
              {"k_min", tree.k_min},
              {"k_max", tree.k_max},
              {"cubes", tree.cubes.size()},
              {"grid", gmt::to_json(grid)}};
  return o;
}

Outcome run_beta(const RunConfig& c) {
  Outcome o;
  const gmt::WeightedSet E = load_input(c, c.input);
  const gmt::DyadicTree tree = gmt::build_tree(E, tree_options(c));
  const gmt::PlaneFamily family = plane_family(c, E);
  const gmt::BetaKind kind = beta_kind(c.beta_kind);
  const double q = kind == gmt::BetaKind::lq ? parse_q(c.q) : gmt::kInfQ;
  const std::vector<gmt::BetaValue> table = gmt::beta_table(tree, family, kind, q);
  const fs::path csv = fs::path(c.out_dir) / "beta.csv";
  write_text(csv, gmt::beta_table_csv(tree, table));
  o.artifacts.push_back(csv.string());

  gmt::GeometricLemmaReport lemma;
  if (kind == gmt::BetaKind::lq)
    lemma = gmt::glem_check(tree, table, c.p, c.M);
  else if (kind == gmt::BetaKind::sup)
    lemma = gmt::wglem_check(tree, table, c.eps, c.M);
  else
    lemma = gmt::bwglem_check(tree, table, c.eps, c.M);
  if (!std::isfinite(lemma.worst_ratio)) throw std::runtime_error("non-finite Carleson ratio");
  o.pass = lemma.ok;
  o.result = {{"cloud", cloud_summary(E)}, {"family", family.name()}, {"cubes", tree.cubes.size()},
              {"lemma", gmt::to_json(lemma)}};
  return o;
}

struct CoronaRun {
  gmt::DyadicTree tree;
  gmt::ApproximantCatalog catalog;
  gmt::CoronaDecomposition corona;
  gmt::CoronaReport report;
};

// The tree and corona refer to each other, so the result lives behind a stable pointer.
std::unique_ptr<CoronaRun> corona_stage(const RunConfig& c, const gmt::WeightedSet& E) {
  auto run = std::make_unique<CoronaRun>();
  gmt::RegularityOptions ropts;
  ropts.max_centers = 2048;
  run->catalog = gmt::ApproximantCatalog::build(load_catalog(c), ropts);
  run->tree = gmt::build_tree(E, tree_options(c));
  run->corona = gmt::build_corona(run->tree, run->catalog, c.eta, c.K);
  run->report = gmt::validate_corona(run->corona, run->catalog);
  return run;
}

Outcome run_corona(const RunConfig& c) {
  Outcome o;
  const gmt::WeightedSet E = load_input(c, c.input);
  const auto run = corona_stage(c, E);
  const fs::path path = fs::path(c.out_dir) / "corona.json";
  write_text(path, gmt::to_json(run->corona).dump(2) + "\n");
  o.artifacts.push_back(path.string());
  o.pass = run->report.ok;
  o.result = {{"cloud", cloud_summary(E)},
              {"cubes", run->tree.cubes.size()},
              {"catalog_constant", run->catalog.uniform_constant},
              {"regimes", run->corona.regimes.size()},
              {"bad", run->corona.bad.size()},
              {"packing_constant", run->corona.packing_constant},
              {"validation", gmt::to_json(run->report)}};
  return o;
}

Outcome run_bp2(const RunConfig& c) {
  Outcome o;
  const gmt::WeightedSet E = load_input(c, c.input);
  const auto run = corona_stage(c, E);
  o.result = {{"cloud", cloud_summary(E)}, {"cubes", run->tree.cubes.size()}, {"corona", gmt::to_json(run->report)}};
  if (!run->report.ok && c.fail_fast) {
    o.pass = false;
    o.result["stopped_at"] = "corona";
    return o;
  }
  gmt::Bp2Options opts;
  opts.fail_fast = c.fail_fast;
  try {
    const gmt::Bp2Certificate cert = gmt::corona_to_bp2(run->tree, run->corona, run->catalog, opts);
    o.result["certificate"] = gmt::to_json(cert);
    o.pass = run->report.ok && cert.ok;
  } catch (const gmt::Bp2Failure& e) {
    o.pass = false;
    o.result["stopped_at"] = "bp2";
    o.result["failure"] = {{"cube", e.cube()}, {"what", e.what()}};
  }
  return o;
}

Outcome run_transfer(const RunConfig& c) {
  Outcome o;
  const gmt::WeightedSet E = load_input(c, c.input);
  const double q = parse_q(c.q);
  if (!gmt::transfer_gate(c.p, q, E.d())) {
    const double gate = (std::isinf(q) ? 0.0 : 1.0 / q) - 1.0 / c.p + 1.0 / E.d();
    throw InputError(fmt::format("(p, q) gate violated: 1/q - 1/p + 1/d = {:.6g} must be > 0 (p = {}, q = {}, d = {})",
                                 gate, c.p, c.q, E.d()));
  }
  gmt::RegularityOptions ropts;
  ropts.max_centers = 2048;
  const gmt::ApproximantCatalog catalog = gmt::ApproximantCatalog::build(load_catalog(c), ropts);
  const gmt::DyadicTree tree = gmt::build_tree(E, tree_options(c));
  const gmt::PlaneFamily family = plane_family(c, E);
  double theta = c.theta;
  if (!(theta > 0.0)) theta = gmt::bp_check(tree, catalog.sets, 0.0).min_theta * (1.0 - 1e-9);
  gmt::TransferOptions opts;
  opts.p = c.p;
  opts.q = q;
  opts.eps = c.eps;
  opts.member_tree = tree_options(c);
  const gmt::TransferReport r = gmt::transfer_check(tree, catalog, family, theta, opts);
  o.pass = r.ok;
  o.result = {{"cloud", cloud_summary(E)}, {"family", family.name()}, {"transfer", gmt::to_json(r)}};
  return o;
}

Outcome run_parabolic(const RunConfig& c) {
  Outcome o;
  if (c.mode == "pipeline") {
    const gmt::WeightedSet E = load_input(c, c.input);
    gmt::PurOptions opts;
    opts.eta = c.eta;
    opts.K = c.K;
    opts.theta = c.theta;
    opts.tree = tree_options(c);
    opts.bp2.fail_fast = c.fail_fast;
    try {
      const gmt::PurReport r = gmt::pur_pipeline(E, load_catalog(c), opts);
      o.pass = r.ok;
      o.result = {{"cloud", cloud_summary(E)}, {"pipeline", gmt::to_json(r)}};
    } catch (const gmt::PipelineError& e) {
      if (e.stage() == "input") throw InputError(e.what());
      if (e.stage() == "bp2" || e.stage() == "regularity") {
        o.pass = false;
        o.result = {{"cloud", cloud_summary(E)}, {"stopped_at", e.stage()}, {"failure", e.what()}};
        return o;
      }
      throw;
    }
    return o;
  }

  const gmt::LewisSilverGraph ls = gmt::lewis_silver_graph(2, c.modulus_C, c.nx, c.seed);
  const gmt::ModulusReport mod = gmt::modulus_check(ls.g, ls.graph.grid.dt, c.modulus_C);
  const gmt::WeightedSet E = ls.graph.cloud();
  const gmt::DyadicTree tree = gmt::build_tree(E, tree_options(c));
  gmt::ObservationOptions oo;
  oo.cubes_per_level = c.cubes_per_level;
  const gmt::ObservationReport obs = gmt::observation_check(tree, oo);
  const gmt::GpgReport gpg = gmt::gpg_check(ls.graph);
  o.result = {{"cloud", cloud_summary(E)},
              {"cubes", tree.cubes.size()},
              {"modulus", {{"worst_ratio", mod.worst_ratio}, {"worst_lag", mod.worst_lag}, {"scale", ls.scale}}},
              {"gpg", gmt::to_json(gpg)},
              {"observation", gmt::to_json(obs)}};
  o.pass = obs.ok && mod.worst_ratio <= 1.0 + 1e-9;
  if (!o.pass && c.fail_fast) return o;
  if (!c.refine.empty()) {
    const gmt::RefinementReport ref = gmt::glem_refinement(
        [&](int nx) { return gmt::lewis_silver_graph(2, c.modulus_C, nx, c.seed).graph; }, c.refine,
        tree_options(c));
    o.result["refinement"] = gmt::to_json(ref);
    o.pass = o.pass && ref.glem_increasing;
  }
  const fs::path grid = fs::path(c.out_dir) / "lewis_silver_psi.csv";
  write_text(grid, gmt::graph_csv(ls.graph));
  o.artifacts.push_back(grid.string());
  return o;
}

Outcome run_report(const RunConfig& c) {
  Outcome o;
  json entries = json::array();
  for (const std::string& path : c.reports) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open report " + path);
    json r;
    try {
      r = json::parse(in);
    } catch (const json::parse_error& e) {
      throw InputError("malformed report " + path + ": " + e.what());
    }
    if (!r.contains("verdict") || !r.contains("subcommand")) throw InputError("not a gmt report: " + path);
    const bool pass = r["verdict"] == "pass";
    entries.push_back({{"path", path},
                       {"subcommand", r["subcommand"]},
                       {"verdict", r["verdict"]},
                       {"exit_code", r.value("exit_code", -1)}});
    o.pass = o.pass && pass;
    if (!pass && c.fail_fast) break;
  }
  o.result = {{"reports", entries}};
  return o;
}

Outcome dispatch(const RunConfig& c) {
  if (c.subcommand == "gen") return run_gen(c);
  if (c.subcommand == "cubes") return run_cubes(c);
  if (c.subcommand == "beta") return run_beta(c);
  if (c.subcommand == "corona") return run_corona(c);
  if (c.subcommand == "bp2") return run_bp2(c);
  if (c.subcommand == "transfer") return run_transfer(c);
  if (c.subcommand == "parabolic") return run_parabolic(c);
  if (c.subcommand == "report") return run_report(c);
  throw InputError("unknown subcommand " + c.subcommand);
}

void add_common(CLI::App* app, RunConfig& c) {
  app->add_option("--out", c.out_dir, "Output directory");
  app->add_option("--report", c.report, "Report path (default <out>/<subcommand>_report.json)");
  app->add_option("--seed", c.seed, "Random seed (GMT_SEED overrides)");
  app->add_option("--jobs", c.jobs, "Worker threads (0 = default)");
  app->add_flag("--fail-fast", c.fail_fast, "Stop at the first failing stage");
}

void add_analysis(CLI::App* app, RunConfig& c) {
  app->add_option("--input,-i", c.input, "Point-cloud CSV (sidecar next to it)");
  app->add_option("--r-min", c.r_min, "Override the lower scale");
  app->add_option("--r-max", c.r_max, "Override the upper scale");
  app->add_option("--k-min", c.k_min, "Coarsest dyadic level");
  app->add_option("--k-max", c.k_max, "Finest dyadic level");
}

void add_catalog(CLI::App* app, RunConfig& c) {
  app->add_option("--catalog,-c", c.catalog, "Approximant clouds")->delimiter(',');
  app->add_option("--eta", c.eta, "Corona closeness");
  app->add_option("--K", c.K, "Dilation factor");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Uniform rectifiability toolkit for sampled sets"};
  app.require_subcommand(1);

  CLI::App* gen = app.add_subcommand("gen", "Generate a fixture point cloud");
  gen->add_option("--kind", cfg.kind, "plane, line, lipschitz, two-planes, staircase, staircase-lines, parabolic-plane, gpg, lewis-silver");
  gen->add_option("--name", cfg.name, "Output file stem (default: kind)");
  gen->add_option("--n", cfg.n, "Ambient (spatial) dimension");
  gen->add_option("--dim", cfg.dim, "Plane dimension");
  gen->add_option("--lambda", cfg.lambda, "Lipschitz / staircase slope");
  gen->add_option("--length", cfg.length, "Side length of the parameter domain");
  gen->add_option("--spacing", cfg.spacing, "Sample spacing");
  gen->add_option("--gap", cfg.gap, "Distance between two planes");
  gen->add_option("--facets", cfg.facets, "Staircase facets");
  gen->add_option("--slope", cfg.slope, "Parabolic plane slope");
  gen->add_option("--x0", cfg.x0, "Parabolic plane offset");
  gen->add_option("--margin", cfg.margin, "Parabolic plane margin");
  gen->add_option("--time-length", cfg.time_length, "Time extent of parabolic samples");
  gen->add_option("--nx", cfg.nx, "Spatial nodes of graph grids");
  gen->add_option("--C", cfg.modulus_C, "Modulus constant of the Lewis-Silver graph");
  gen->add_option("--amplitude", cfg.amplitude, "Amplitude of the gpg bump");
  gen->add_option("--offset", cfg.offset, "Offset of a plane along the next coordinate");
  add_common(gen, cfg);

  CLI::App* cubes = app.add_subcommand("cubes", "Build and validate the dyadic cubes");
  add_analysis(cubes, cfg);
  add_common(cubes, cfg);

  CLI::App* beta = app.add_subcommand("beta", "Beta table and the matching Carleson condition");
  add_analysis(beta, cfg);
  beta->add_option("--family", cfg.family, "affine or parabolic");
  beta->add_option("--plane-dim", cfg.plane_dim, "Affine plane dimension");
  beta->add_option("--kind", cfg.beta_kind, "lq, sup or bilateral");
  beta->add_option("--p", cfg.p, "Carleson exponent");
  beta->add_option("--q", cfg.q, "Beta exponent (number or inf)");
  beta->add_option("--eps", cfg.eps, "Threshold for sup / bilateral");
  beta->add_option("--M", cfg.M, "Carleson bound");
  add_common(beta, cfg);

  CLI::App* corona = app.add_subcommand("corona", "Corona decomposition against a catalog");
  add_analysis(corona, cfg);
  add_catalog(corona, cfg);
  add_common(corona, cfg);

  CLI::App* bp2 = app.add_subcommand("bp2", "Big pieces of big pieces certificate");
  add_analysis(bp2, cfg);
  add_catalog(bp2, cfg);
  add_common(bp2, cfg);

  CLI::App* transfer = app.add_subcommand("transfer", "Transfer geometric lemmas from big pieces");
  add_analysis(transfer, cfg);
  transfer->add_option("--catalog,-c", cfg.catalog, "Approximant clouds")->delimiter(',');
  transfer->add_option("--family", cfg.family, "affine or parabolic");
  transfer->add_option("--plane-dim", cfg.plane_dim, "Affine plane dimension");
  transfer->add_option("--theta", cfg.theta, "Big-piece constant (0 = measured)");
  transfer->add_option("--p", cfg.p, "Carleson exponent");
  transfer->add_option("--q", cfg.q, "Beta exponent (number or inf)");
  transfer->add_option("--eps", cfg.eps, "Threshold for the weak lemmas");
  add_common(transfer, cfg);

  CLI::App* parabolic = app.add_subcommand("parabolic", "Parabolic graph analyses");
  parabolic->add_option("--mode", cfg.mode, "lewis-silver or pipeline");
  add_analysis(parabolic, cfg);
  add_catalog(parabolic, cfg);
  parabolic->add_option("--theta", cfg.theta, "Big-piece constant (0 = measured)");
  parabolic->add_option("--nx", cfg.nx, "Spatial nodes of the Lewis-Silver grid");
  parabolic->add_option("--C", cfg.modulus_C, "Modulus constant");
  parabolic->add_option("--refine", cfg.refine, "Refinement resolutions")->delimiter(',');
  parabolic->add_option("--cubes-per-level", cfg.cubes_per_level, "Sampled cubes per level");
  add_common(parabolic, cfg);

  CLI::App* report = app.add_subcommand("report", "Summarize report files");
  report->add_option("reports", cfg.reports, "Report JSON files");
  add_common(report, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kInput;
  }
  cfg.subcommand = app.get_subcommands().front()->get_name();

  int code = kPass;
  json doc;
  doc["tool"] = "gmt";
  doc["subcommand"] = cfg.subcommand;
  try {
    if (const char* env = std::getenv("GMT_SEED")) {
      try {
        std::size_t used = 0;
        cfg.seed = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::logic_error&) {
        throw InputError(std::string("GMT_SEED must be an unsigned integer, got '") + env + "'");
      }
      cfg.seed_from_env = true;
    }
    if (cfg.report.empty()) {
      const std::string stem = cfg.subcommand == "gen" ? "gen_" + (cfg.name.empty() ? cfg.kind : cfg.name) : cfg.subcommand;
      cfg.report = (fs::path(cfg.out_dir) / (stem + "_report.json")).string();
    }
    validate(cfg);
    fs::create_directories(cfg.out_dir);
    gmt::set_jobs(cfg.jobs);
    doc["config"] = config_json(cfg);
    const Outcome o = dispatch(cfg);
    code = o.pass ? kPass : kVerdict;
    doc["result"] = o.result;
    doc["artifacts"] = o.artifacts;
  } catch (const InputError& e) {
    code = kInput;
    doc["error"] = e.what();
  } catch (const std::invalid_argument& e) {
    code = kInput;
    doc["error"] = e.what();
  } catch (const std::out_of_range& e) {
    code = kInput;
    doc["error"] = e.what();
  } catch (const fs::filesystem_error& e) {
    code = kInput;
    doc["error"] = e.what();
  } catch (const std::exception& e) {
    code = kNumeric;
    doc["error"] = e.what();
  }
  if (!doc.contains("config")) doc["config"] = config_json(cfg);
  doc["verdict"] = code == kPass ? "pass" : "fail";
  doc["exit_code"] = code;

  try {
    if (!cfg.report.empty()) {
      const fs::path rp(cfg.report);
      if (rp.has_parent_path()) fs::create_directories(rp.parent_path());
      write_text(rp, doc.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "gmt: could not write report: {}\n", e.what());
    if (code == kPass) code = kInput;
  }
  if (doc.contains("error")) fmt::print(stderr, "gmt {}: {}\n", cfg.subcommand, doc["error"].get<std::string>());
  fmt::print("gmt {}: {} (exit {})\n", cfg.subcommand, code == kPass ? "pass" : "fail", code);
  return code;
}
