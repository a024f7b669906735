#include "gmt/parabolic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "gmt/parallel.hpp"

namespace gmt {

namespace {

// Spatial multi-index of a flat spatial node id (first axis slowest).
std::vector<int> unflatten(std::size_t id, const GridShape& g) {
  std::vector<int> idx(static_cast<std::size_t>(g.spatial_dims));
  for (int a = g.spatial_dims - 1; a >= 0; --a) {
    idx[static_cast<std::size_t>(a)] = static_cast<int>(id % static_cast<std::size_t>(g.nx));
    id /= static_cast<std::size_t>(g.nx);
  }
  return idx;
}

std::size_t flatten(const std::vector<int>& idx, const GridShape& g) {
  std::size_t id = 0;
  for (int v : idx) id = id * static_cast<std::size_t>(g.nx) + static_cast<std::size_t>(v);
  return id;
}

double smooth_bump(double u) {
  const double s = 2.0 * u - 1.0;
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

double max_reduce(std::size_t count, const std::function<double(std::size_t)>& f) {
  std::vector<double> vals(count, 0.0);
  parallel_for(count, [&](std::size_t i) { vals[i] = f(i); });
  double m = 0.0;
  for (double v : vals) m = std::max(m, v);
  return m;
}

}  // namespace

std::size_t GridShape::spatial_nodes() const {
  std::size_t s = 1;
  for (int a = 0; a < spatial_dims; ++a) s *= static_cast<std::size_t>(nx);
  return s;
}

WeightedSet Lip112Graph::cloud() const {
  const int sd = grid.spatial_dims;
  std::vector<double> coords;
  coords.reserve(grid.size() * static_cast<std::size_t>(n + 1));
  for (std::size_t s = 0; s < grid.spatial_nodes(); ++s) {
    const std::vector<int> idx = unflatten(s, grid);
    for (int j = 0; j < grid.nt; ++j) {
      for (int a = 0; a < sd; ++a) coords.push_back(idx[static_cast<std::size_t>(a)] * grid.dx);
      coords.push_back(at(s, j));
      coords.push_back(j * grid.dt);
    }
  }
  const double weight = std::pow(grid.dx, sd) * grid.dt;
  const double r_min = 2.0 * std::max(grid.dx, std::sqrt(grid.dt));
  const double r_max = std::max(grid.nx * grid.dx, std::sqrt(grid.nt * grid.dt));
  return WeightedSet(Metric::parabolic(n), std::move(coords), std::vector<double>(grid.size(), weight), n + 1, r_min,
                     r_max);
}

Lip112Graph sample_graph(int n, const std::function<double(const double*, double)>& psi, int nx, double length,
                         double time_length) {
  if (n < 1) throw std::invalid_argument("parabolic graph needs n >= 1");
  if (nx < 1 || !(length > 0.0) || !(time_length > 0.0)) throw std::invalid_argument("graph grid must be nonempty");
  Lip112Graph g;
  g.n = n;
  g.grid.spatial_dims = n - 1;
  g.grid.nx = n > 1 ? nx : 1;
  g.grid.dx = length / nx;
  g.grid.dt = g.grid.dx * g.grid.dx;
  g.grid.nt = std::max(1, static_cast<int>(std::llround(time_length / g.grid.dt)));
  g.psi.resize(g.grid.size());
  std::vector<double> x(static_cast<std::size_t>(std::max(n - 1, 1)), 0.0);
  for (std::size_t s = 0; s < g.grid.spatial_nodes(); ++s) {
    const std::vector<int> idx = unflatten(s, g.grid);
    for (int a = 0; a < n - 1; ++a) x[static_cast<std::size_t>(a)] = idx[static_cast<std::size_t>(a)] * g.grid.dx;
    for (int j = 0; j < g.grid.nt; ++j)
      g.psi[s * static_cast<std::size_t>(g.grid.nt) + static_cast<std::size_t>(j)] = psi(x.data(), j * g.grid.dt);
  }
  g.lip_constant = lip112_constant(g);
  return g;
}

double spatial_lipschitz(const Lip112Graph& g) {
  const GridShape& grid = g.grid;
  if (grid.spatial_dims == 0) return 0.0;
  return max_reduce(grid.spatial_nodes(), [&](std::size_t s) {
    std::vector<int> idx = unflatten(s, grid);
    double best = 0.0;
    for (int j = 0; j < grid.nt; ++j) {
      double norm2 = 0.0;
      for (int a = 0; a < grid.spatial_dims; ++a) {
        if (idx[static_cast<std::size_t>(a)] + 1 >= grid.nx) continue;
        ++idx[static_cast<std::size_t>(a)];
        const double diff = (g.at(flatten(idx, grid), j) - g.at(s, j)) / grid.dx;
        --idx[static_cast<std::size_t>(a)];
        norm2 += diff * diff;
      }
      best = std::max(best, std::sqrt(norm2));
    }
    return best;
  });
}

double time_holder(const Lip112Graph& g) {
  const GridShape& grid = g.grid;
  return max_reduce(grid.spatial_nodes(), [&](std::size_t s) {
    const double* row = g.psi.data() + s * static_cast<std::size_t>(grid.nt);
    double best = 0.0;
    for (int lag = 1; lag < grid.nt; ++lag) {
      double osc = 0.0;
      for (int j = 0; j + lag < grid.nt; ++j) osc = std::max(osc, std::abs(row[j + lag] - row[j]));
      best = std::max(best, osc / std::sqrt(lag * grid.dt));
    }
    return best;
  });
}

double lip112_constant(const Lip112Graph& g) { return std::max(spatial_lipschitz(g), time_holder(g)); }

double half_derivative_constant() { return -1.0 / (2.0 * std::sqrt(2.0 * std::numbers::pi)); }

std::vector<double> half_derivative_row(const std::vector<double>& f, double dt) {
  const int N = static_cast<int>(f.size());
  std::vector<double> out(f.size(), 0.0);
  if (N == 0) return out;
  const double h = dt;
  const int M = N;
  // Product integration of the piecewise-linear interpolant against u^{-3/2} on [h, M h]; the
  // symmetric core [0, h] uses the second difference; f vanishes beyond the grid.
  std::vector<double> W(static_cast<std::size_t>(M) + 1, 0.0);
  for (int m = 1; m < M; ++m) {
    const double a = m * h, b = (m + 1) * h;
    const double i0 = 2.0 * (1.0 / std::sqrt(a) - 1.0 / std::sqrt(b));
    const double i1 = 2.0 * (std::sqrt(b) - std::sqrt(a));
    const double B = (i1 - a * i0) / h;
    const double A = i0 - B;
    W[static_cast<std::size_t>(m)] += A;
    W[static_cast<std::size_t>(m) + 1] += B;
  }
  W[1] += (2.0 / 3.0) / std::sqrt(h);
  double total = 0.0;
  for (int m = 1; m <= M; ++m) total += W[static_cast<std::size_t>(m)];
  const double tail = 4.0 / std::sqrt(M * h);
  const double c = half_derivative_constant();
  for (int i = 0; i < N; ++i) {
    double s = 0.0;
    for (int j = 0; j < N; ++j)
      if (j != i && f[static_cast<std::size_t>(j)] != 0.0) s += W[static_cast<std::size_t>(std::abs(j - i))] * f[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = c * (s - (2.0 * total + tail) * f[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<double> half_time_derivative(const Lip112Graph& g) {
  const GridShape& grid = g.grid;
  double scale = 1.0;
  for (double v : g.psi) scale = std::max(scale, std::abs(v));
  for (std::size_t s = 0; s < grid.spatial_nodes(); ++s)
    if (std::abs(g.at(s, 0)) > 1e-12 * scale || std::abs(g.at(s, grid.nt - 1)) > 1e-12 * scale)
      throw std::invalid_argument("half_time_derivative: psi is not compactly supported in time on the grid");
  std::vector<double> out(g.psi.size());
  parallel_for(grid.spatial_nodes(), [&](std::size_t s) {
    const auto begin = g.psi.begin() + static_cast<std::ptrdiff_t>(s * static_cast<std::size_t>(grid.nt));
    const std::vector<double> row(begin, begin + grid.nt);
    const std::vector<double> d = half_derivative_row(row, grid.dt);
    std::copy(d.begin(), d.end(), out.begin() + static_cast<std::ptrdiff_t>(s * static_cast<std::size_t>(grid.nt)));
  });
  return out;
}

double half_derivative_calibration(double dt) {
  const int half = static_cast<int>(std::llround(10.0 / dt));
  std::vector<double> f(static_cast<std::size_t>(2 * half + 1));
  for (int i = -half; i <= half; ++i) f[static_cast<std::size_t>(i + half)] = std::exp(-0.5 * (i * dt) * (i * dt));
  const double numeric = half_derivative_row(f, dt)[static_cast<std::size_t>(half)];
  // (2 pi)^{-1} int |tau|^{1/2} sqrt(2 pi) exp(-tau^2 / 2) dtau
  const double exact = 2.0 * std::pow(2.0, -0.25) * std::tgamma(0.75) / std::sqrt(2.0 * std::numbers::pi);
  return numeric / exact;
}

BmoResult parabolic_bmo_norm(const std::vector<double>& field, const GridShape& grid) {
  if (field.size() != grid.size()) throw std::invalid_argument("parabolic_bmo_norm: field does not match the grid");
  for (double v : field)
    if (!std::isfinite(v)) throw std::invalid_argument("parabolic_bmo_norm: field is not finite");
  BmoResult best;
  const int sd = grid.spatial_dims;
  const int s0 = sd > 0 ? grid.nx : static_cast<int>(std::sqrt(grid.nt * grid.dt) / grid.dx);
  const double ratio = grid.dx * grid.dx / grid.dt;
  for (int level = 0; (s0 >> level) >= 1; ++level) {
    const int s = s0 >> level;
    const int tlen = std::max(1, static_cast<int>(std::llround(s * s * ratio)));
    if (tlen > grid.nt) continue;
    const int per_axis = sd > 0 ? grid.nx / s : 1;
    const int time_boxes = grid.nt / tlen;
    std::size_t spatial_boxes = 1;
    for (int a = 0; a < sd; ++a) spatial_boxes *= static_cast<std::size_t>(per_axis);
    const std::size_t count = spatial_boxes * static_cast<std::size_t>(time_boxes);
    std::vector<double> osc(count, 0.0);
    parallel_for(count, [&](std::size_t b) {
      const int tb = static_cast<int>(b % static_cast<std::size_t>(time_boxes));
      std::size_t rest = b / static_cast<std::size_t>(time_boxes);
      std::vector<int> origin(static_cast<std::size_t>(sd));
      for (int a = sd - 1; a >= 0; --a) {
        origin[static_cast<std::size_t>(a)] = static_cast<int>(rest % static_cast<std::size_t>(per_axis)) * s;
        rest /= static_cast<std::size_t>(per_axis);
      }
      std::vector<std::size_t> rows;
      std::vector<int> idx(static_cast<std::size_t>(sd), 0);
      while (true) {
        std::vector<int> node(static_cast<std::size_t>(sd));
        for (int a = 0; a < sd; ++a) node[static_cast<std::size_t>(a)] = origin[static_cast<std::size_t>(a)] + idx[static_cast<std::size_t>(a)];
        rows.push_back(flatten(node, grid));
        int a = sd - 1;
        while (a >= 0 && ++idx[static_cast<std::size_t>(a)] == s) idx[static_cast<std::size_t>(a--)] = 0;
        if (a < 0) break;
      }
      double mean = 0.0;
      for (std::size_t r : rows)
        for (int j = tb * tlen; j < (tb + 1) * tlen; ++j) mean += field[r * static_cast<std::size_t>(grid.nt) + static_cast<std::size_t>(j)];
      const double n = static_cast<double>(rows.size()) * tlen;
      mean /= n;
      double dev = 0.0;
      for (std::size_t r : rows)
        for (int j = tb * tlen; j < (tb + 1) * tlen; ++j)
          dev += std::abs(field[r * static_cast<std::size_t>(grid.nt) + static_cast<std::size_t>(j)] - mean);
      osc[b] = dev / n;
    });
    for (std::size_t b = 0; b < count; ++b)
      if (osc[b] > best.norm) {
        best.norm = osc[b];
        best.level = level;
        best.time_origin = static_cast<int>(b % static_cast<std::size_t>(time_boxes)) * tlen;
        std::size_t rest = b / static_cast<std::size_t>(time_boxes);
        best.spatial_origin.assign(static_cast<std::size_t>(sd), 0);
        for (int a = sd - 1; a >= 0; --a) {
          best.spatial_origin[static_cast<std::size_t>(a)] = static_cast<int>(rest % static_cast<std::size_t>(per_axis)) * s;
          rest /= static_cast<std::size_t>(per_axis);
        }
      }
  }
  return best;
}

GpgReport gpg_check(const Lip112Graph& g, double b1_cap, double b2_cap) {
  GpgReport r;
  r.b1 = spatial_lipschitz(g);
  r.lip_constant = std::max(r.b1, time_holder(g));
  r.bmo = parabolic_bmo_norm(half_time_derivative(g), g.grid);
  r.b2 = r.bmo.norm;
  r.ok = std::isfinite(r.b1) && std::isfinite(r.b2) && r.b1 <= b1_cap && r.b2 <= b2_cap;
  return r;
}

double lewis_silver_modulus(double tau, double C) {
  if (tau <= 0.0) return 0.0;
  if (tau >= 1.0) return C;
  return C * std::min(std::sqrt(tau / std::log(1.0 / tau)), 1.0);
}

ModulusReport modulus_check(const std::vector<double>& g, double dt, double C) {
  const int N = static_cast<int>(g.size());
  std::vector<double> ratio(static_cast<std::size_t>(std::max(N, 1)), 0.0);
  parallel_for(static_cast<std::size_t>(std::max(N - 1, 0)), [&](std::size_t i) {
    const int lag = static_cast<int>(i) + 1;
    double osc = 0.0;
    for (int j = 0; j + lag < N; ++j) osc = std::max(osc, std::abs(g[static_cast<std::size_t>(j + lag)] - g[static_cast<std::size_t>(j)]));
    ratio[i] = osc / lewis_silver_modulus(lag * dt, C);
  });
  ModulusReport r;
  for (int i = 0; i + 1 < N; ++i)
    if (ratio[static_cast<std::size_t>(i)] > r.worst_ratio) {
      r.worst_ratio = ratio[static_cast<std::size_t>(i)];
      r.worst_lag = (i + 1) * dt;
    }
  return r;
}

LewisSilverGraph lewis_silver_graph(int n, double C, int nx, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("Lewis-Silver graph needs n >= 2");
  if (!(C > 0.0) || nx < 4) throw std::invalid_argument("Lewis-Silver graph needs C > 0 and nx >= 4");
  const double dx = 1.0 / nx;
  const double dt = dx * dx;
  const int nt = nx * nx;
  // Lacunary frequencies 2^j up to a quarter of the sampling rate.
  const int top = std::max(1, static_cast<int>(std::floor(std::log2(0.25 / dt))));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> sign(static_cast<std::size_t>(top) + 1);
  for (int j = 1; j <= top; ++j) sign[static_cast<std::size_t>(j)] = coin(rng) ? 1.0 : -1.0;
  std::vector<double> raw(static_cast<std::size_t>(nt));
  for (int i = 0; i < nt; ++i) {
    const double t = i * dt;
    double s = 0.0;
    for (int j = 1; j <= top; ++j)
      s += sign[static_cast<std::size_t>(j)] * std::ldexp(1.0, -j) * std::sqrt(std::ldexp(1.0, j) / j) *
           std::sin(2.0 * std::numbers::pi * std::ldexp(t, j));
    raw[static_cast<std::size_t>(i)] = smooth_bump(t) * s;
  }
  LewisSilverGraph out;
  out.seed = seed;
  out.scale = C / modulus_check(raw, dt, 1.0).worst_ratio;
  out.g.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out.g[i] = out.scale * raw[i];
  const std::vector<double> gt = out.g;
  out.graph = sample_graph(
      n,
      [&](const double* x, double t) {
        double phi = 1.0;
        for (int a = 0; a < n - 1; ++a) phi *= smooth_bump(x[a]);
        const int j = std::clamp(static_cast<int>(std::llround(t / dt)), 0, nt - 1);
        return phi * gt[static_cast<std::size_t>(j)];
      },
      nx, 1.0, 1.0);
  return out;
}

double observation_bound(double side) {
  const double inv = 1.0 / side;
  if (side >= 1.0) return inv;
  return std::min(1.0 / std::sqrt(std::log(inv)), inv);
}

std::vector<int> sample_cubes(const DyadicTree& tree, int per_level) {
  std::vector<int> out;
  for (const std::vector<int>& level : tree.levels) {
    if (per_level <= 0 || static_cast<int>(level.size()) <= per_level) {
      out.insert(out.end(), level.begin(), level.end());
      continue;
    }
    for (int i = 0; i < per_level; ++i)
      out.push_back(level[static_cast<std::size_t>(static_cast<long long>(i) * static_cast<long long>(level.size()) / per_level)]);
  }
  return out;
}

ObservationReport observation_check(const DyadicTree& tree, const ObservationOptions& opts) {
  ObservationReport r;
  const std::vector<int> cubes = sample_cubes(tree, opts.cubes_per_level);
  const std::vector<BetaValue> bb = beta_values(tree, cubes, PlaneFamily::parabolic(), BetaKind::bilateral, kInfQ, opts.beta);
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    ObservationSample s;
    s.cube = cubes[i];
    s.level = tree.cube(s.cube).level;
    s.side = tree.length(s.cube);
    s.bbeta = bb[i].value;
    s.bound = observation_bound(s.side);
    const double ratio = s.bbeta / s.bound;
    if (ratio > r.C_n) {
      r.C_n = ratio;
      r.witness = s.cube;
    }
    r.samples.push_back(s);
  }
  r.ok = std::isfinite(r.C_n);
  for (double eps : opts.eps) {
    EpsilonWindow w;
    w.eps = eps;
    w.lower = std::exp(-(r.C_n / eps) * (r.C_n / eps));
    w.upper = r.C_n / eps;
    for (const ObservationSample& s : r.samples) {
      if (!(s.bbeta > eps)) continue;
      ++w.above;
      if (s.side < w.lower || s.side > w.upper) ++w.violations;
    }
    if (w.violations > 0) r.ok = false;
    r.windows.push_back(w);
  }
  return r;
}

GraphChainReport graph_bbeta_chain(const DyadicTree& tree, double K, int cubes_per_level, const BetaOptions& opts) {
  if (!(K >= 1.0)) throw std::invalid_argument("graph_bbeta_chain needs K >= 1");
  GraphChainReport r;
  r.K = K;
  const std::vector<int> cubes = sample_cubes(tree, cubes_per_level);
  const PlaneFamily family = PlaneFamily::parabolic();
  const std::vector<BetaValue> bb = beta_values(tree, cubes, family, BetaKind::bilateral, kInfQ, opts);
  BetaOptions wide = opts;
  wide.kappa = 2.0 * K;
  const std::vector<BetaValue> big = beta_values(tree, cubes, family, BetaKind::sup, kInfQ, wide);
  std::vector<double> ratios;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    ++r.cubes;
    if (big[i].value <= 1e-12) {
      if (bb[i].value > 1e-9) {
        ++r.degenerate;
        if (r.witness < 0) r.witness = cubes[i];
      }
      continue;
    }
    const double ratio = bb[i].value / big[i].value;
    ratios.push_back(ratio);
    if (ratio > r.c) {
      r.c = ratio;
      r.witness = cubes[i];
    }
  }
  if (!ratios.empty()) {
    std::nth_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2), ratios.end());
    r.median = ratios[ratios.size() / 2];
  }
  r.ok = r.degenerate == 0 && std::isfinite(r.c);
  return r;
}

RefinementReport glem_refinement(const std::function<Lip112Graph(int)>& make, const std::vector<int>& resolutions,
                                 const TreeOptions& tree_opts, const BetaOptions& beta_opts) {
  RefinementReport r;
  for (int nx : resolutions) {
    const Lip112Graph g = make(nx);
    const WeightedSet E = g.cloud();
    const DyadicTree tree = build_tree(E, tree_opts);
    const std::vector<BetaValue> table = beta_table(tree, PlaneFamily::parabolic(), BetaKind::lq, 2.0, beta_opts);
    RefinementStep s;
    s.nx = nx;
    s.points = E.size();
    s.cubes = tree.cubes.size();
    s.glem = glem_check(tree, table, 2.0, kInfQ).worst_ratio;
    try {
      s.b2 = parabolic_bmo_norm(half_time_derivative(g), g.grid).norm;
    } catch (const std::invalid_argument&) {
      s.b2 = std::numeric_limits<double>::quiet_NaN();
    }
    if (!r.steps.empty()) {
      if (!(s.glem > r.steps.back().glem)) r.glem_increasing = false;
      if (!(s.b2 > r.steps.back().b2)) r.b2_increasing = false;
    }
    r.steps.push_back(s);
  }
  return r;
}

PurReport pur_pipeline(const WeightedSet& E, const std::vector<WeightedSet>& catalog, const PurOptions& opts) {
  if (!E.metric().is_parabolic()) throw PipelineError("input", "pur_pipeline needs a parabolic cloud");
  PurReport r;
  r.regularity = regularity_check(E, opts.regularity);
  if (!r.regularity.ok) throw PipelineError("regularity", r.regularity.failure);

  ApproximantCatalog cat;
  try {
    cat = ApproximantCatalog::build(catalog, opts.regularity);
  } catch (const std::exception& e) {
    throw PipelineError("catalog", e.what());
  }
  DyadicTree tree;
  try {
    tree = build_tree(E, opts.tree);
  } catch (const std::exception& e) {
    throw PipelineError("cubes", e.what());
  }
  r.cubes = tree.cubes.size();

  CoronaDecomposition corona;
  try {
    corona = build_corona(tree, cat, opts.eta, opts.K);
  } catch (const std::exception& e) {
    throw PipelineError("corona", e.what());
  }
  r.corona = validate_corona(corona, cat);
  if (!r.corona.ok) {
    r.ok = false;
    r.messages.push_back("corona: validation failed");
  }

  try {
    r.bp2 = corona_to_bp2(tree, corona, cat, opts.bp2);
  } catch (const Bp2Failure& e) {
    throw PipelineError("bp2", e.what());
  }
  if (!r.bp2.ok) {
    r.ok = false;
    r.messages.push_back("bp2: certificate has failing clauses");
  }

  TransferOptions topts = opts.transfer;
  topts.p = 2.0;
  topts.q = 2.0;
  double theta = opts.theta;
  if (!(theta > 0.0)) theta = bp_check(tree, cat.sets, 0.0).min_theta * (1.0 - 1e-9);
  try {
    r.transfer = transfer_check(tree, cat, PlaneFamily::parabolic(), theta, topts);
  } catch (const std::exception& e) {
    throw PipelineError("transfer", e.what());
  }
  if (!r.transfer.ok) {
    r.ok = false;
    r.messages.push_back("transfer: comparison failed");
  }

  const std::vector<BetaValue> sup = beta_table(tree, PlaneFamily::parabolic(), BetaKind::sup, kInfQ, topts.beta);
  const std::vector<BetaValue> bil = beta_table(tree, PlaneFamily::parabolic(), BetaKind::bilateral, kInfQ, topts.beta);
  for (double eps : opts.eps) {
    r.wgl.push_back(wglem_check(tree, sup, eps, kInfQ));
    r.bwgl.push_back(bwglem_check(tree, bil, eps, kInfQ));
  }
  for (int m : r.transfer.members) {
    const DyadicTree mt = build_tree(cat.sets[static_cast<std::size_t>(m)], opts.tree);
    r.member_chains.push_back(graph_bbeta_chain(mt, opts.chain_K, 64, topts.beta));
    if (!r.member_chains.back().ok) {
      r.ok = false;
      r.messages.push_back("graph chain: member " + std::to_string(m) + " has a degenerate ratio");
    }
  }
  return r;
}

std::string graph_csv(const Lip112Graph& g) {
  std::ostringstream os;
  os.precision(12);
  for (int a = 0; a < g.grid.spatial_dims; ++a) os << 'x' << (a + 1) << ',';
  os << "t,psi\n";
  for (std::size_t s = 0; s < g.grid.spatial_nodes(); ++s) {
    const std::vector<int> idx = unflatten(s, g.grid);
    for (int j = 0; j < g.grid.nt; ++j) {
      for (int v : idx) os << v * g.grid.dx << ',';
      os << j * g.grid.dt << ',' << g.at(s, j) << '\n';
    }
  }
  return os.str();
}

nlohmann::json to_json(const GpgReport& r) {
  return {{"b1", r.b1},
          {"b2", r.b2},
          {"lip_constant", r.lip_constant},
          {"bmo_level", r.bmo.level},
          {"bmo_spatial_origin", r.bmo.spatial_origin},
          {"bmo_time_origin", r.bmo.time_origin},
          {"ok", r.ok}};
}

nlohmann::json to_json(const ObservationReport& r) {
  nlohmann::json windows = nlohmann::json::array();
  for (const EpsilonWindow& w : r.windows)
    windows.push_back({{"eps", w.eps}, {"lower", w.lower}, {"upper", w.upper}, {"above", w.above}, {"violations", w.violations}});
  nlohmann::json levels = nlohmann::json::object();
  std::map<int, std::pair<double, int>> per_level;
  for (const ObservationSample& s : r.samples) {
    auto& e = per_level[s.level];
    e.first = std::max(e.first, s.bbeta);
    ++e.second;
  }
  for (const auto& [k, e] : per_level) levels[std::to_string(k)] = {{"max_bbeta", e.first}, {"cubes", e.second}};
  return {{"C_n", r.C_n}, {"witness", r.witness}, {"samples", r.samples.size()}, {"levels", levels},
          {"windows", windows}, {"ok", r.ok}};
}

nlohmann::json to_json(const GraphChainReport& r) {
  return {{"K", r.K}, {"c", r.c}, {"median", r.median}, {"witness", r.witness}, {"cubes", r.cubes},
          {"degenerate", r.degenerate}, {"ok", r.ok}};
}

nlohmann::json to_json(const RefinementReport& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const RefinementStep& s : r.steps)
    steps.push_back({{"nx", s.nx}, {"points", s.points}, {"cubes", s.cubes}, {"glem", s.glem},
                     {"b2", std::isfinite(s.b2) ? nlohmann::json(s.b2) : nlohmann::json(nullptr)}});
  return {{"steps", steps}, {"glem_increasing", r.glem_increasing}, {"b2_increasing", r.b2_increasing}};
}

nlohmann::json to_json(const PurReport& r) {
  nlohmann::json wgl = nlohmann::json::array(), bwgl = nlohmann::json::array(), chains = nlohmann::json::array();
  for (const auto& x : r.wgl) wgl.push_back(to_json(x));
  for (const auto& x : r.bwgl) bwgl.push_back(to_json(x));
  for (const auto& x : r.member_chains) chains.push_back(to_json(x));
  nlohmann::json bp2 = to_json(r.bp2);
  bp2.erase("cubes");
  return {{"ok", r.ok},
          {"regularity", to_json(r.regularity)},
          {"cubes", r.cubes},
          {"corona", to_json(r.corona)},
          {"bp2", bp2},
          {"transfer", to_json(r.transfer)},
          {"wgl", wgl},
          {"bwgl", bwgl},
          {"member_chains", chains},
          {"messages", r.messages}};
}

}  // namespace gmt
