#include "gmt/beta.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "gmt/parallel.hpp"

namespace gmt {

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[static_cast<std::size_t>(i)] * b[i];
  return s;
}

// A plane together with an orthonormal tangent frame of its rotatable directions.
struct Frame {
  Plane plane;
  std::vector<Vec> tangents;  // spatial tangents; the time axis of parabolic planes is implicit
};

struct CubeSample {
  std::vector<int> ids;  // points of kappa Q
  double diam = 0.0;
  double mass_q = 0.0;
  double mass_2q = 0.0;
  const double* center = nullptr;
};

CubeSample sample_cube(const DyadicTree& t, int cube, double kappa) {
  if (cube < 0 || static_cast<std::size_t>(cube) >= t.cubes.size()) throw std::invalid_argument("beta: cube id out of range");
  if (!(kappa >= 1.0)) throw std::invalid_argument("beta: dilation must be at least 1");
  const Cube& q = t.cube(cube);
  CubeSample s;
  s.ids = dilate(t, cube, kappa);
  s.diam = q.diam;
  s.mass_q = q.mass;
  for (int y : s.ids) s.mass_2q += t.space.weight(static_cast<std::size_t>(y));
  s.center = t.space.point(static_cast<std::size_t>(q.center));
  return s;
}

void check_family(const PlaneFamily& f, const WeightedSet& E) {
  switch (f.kind) {
    case FamilyKind::affine_planes:
      if (E.metric().is_parabolic()) throw std::invalid_argument("affine plane family needs a Euclidean cloud");
      if (f.plane_dim < 0 || f.plane_dim >= E.dim()) throw std::invalid_argument("plane dimension out of range");
      break;
    case FamilyKind::parabolic_planes:
      if (!E.metric().is_parabolic()) throw std::invalid_argument("parabolic plane family needs a parabolic cloud");
      if (E.metric().spatial_dim() < 1) throw std::invalid_argument("parabolic planes need n >= 1");
      break;
    case FamilyKind::explicit_sets:
      if (f.sets.empty()) throw std::invalid_argument("explicit family is empty");
      for (const WeightedSet& s : f.sets)
        if (s.dim() != E.dim()) throw std::invalid_argument("explicit family member has the wrong dimension");
      break;
  }
}

// Weighted principal-component fit; `mult` scales the point weights (IRLS).
Frame fit_frame(const WeightedSet& E, const std::vector<int>& ids, const Vec* mult, const PlaneFamily& f) {
  const int dim = E.dim();
  const int fit_dim = f.kind == FamilyKind::parabolic_planes ? E.metric().spatial_dim() : dim;
  Vec mean(static_cast<std::size_t>(dim), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double w = E.weight(static_cast<std::size_t>(ids[i])) * (mult ? (*mult)[i] : 1.0);
    const double* p = E.point(static_cast<std::size_t>(ids[i]));
    for (int c = 0; c < dim; ++c) mean[static_cast<std::size_t>(c)] += w * p[c];
    total += w;
  }
  if (total > 0.0)
    for (double& m : mean) m /= total;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(fit_dim, fit_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double w = E.weight(static_cast<std::size_t>(ids[i])) * (mult ? (*mult)[i] : 1.0);
    const double* p = E.point(static_cast<std::size_t>(ids[i]));
    Eigen::VectorXd v(fit_dim);
    for (int c = 0; c < fit_dim; ++c) v(c) = p[c] - mean[static_cast<std::size_t>(c)];
    cov.noalias() += w * v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const int codim = f.kind == FamilyKind::parabolic_planes ? 1 : dim - f.plane_dim;
  Frame fr;
  fr.plane.origin = mean;
  for (int j = 0; j < fit_dim; ++j) {
    Vec v(static_cast<std::size_t>(dim), 0.0);
    for (int c = 0; c < fit_dim; ++c) v[static_cast<std::size_t>(c)] = es.eigenvectors()(c, j);
    if (j < codim)
      fr.plane.normals.push_back(std::move(v));
    else
      fr.tangents.push_back(std::move(v));
  }
  return fr;
}

double sup_distance(const Plane& p, const WeightedSet& E, const std::vector<int>& ids) {
  double s = 0.0;
  for (int y : ids) s = std::max(s, p.distance(E.point(static_cast<std::size_t>(y))));
  return s;
}

double power_sum(const Plane& p, const WeightedSet& E, const std::vector<int>& ids, double q) {
  double s = 0.0;
  for (int y : ids) s += E.weight(static_cast<std::size_t>(y)) * std::pow(p.distance(E.point(static_cast<std::size_t>(y))), q);
  return s;
}

// Moves the origin along every normal to the midrange of the projections.
void recenter(Plane& p, const WeightedSet& E, const std::vector<int>& ids) {
  const int dim = E.dim();
  for (const Vec& nu : p.normals) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    const double base = dot(nu, p.origin.data(), dim);
    for (int y : ids) {
      const double s = dot(nu, E.point(static_cast<std::size_t>(y)), dim) - base;
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    if (ids.empty()) continue;
    const double shift = 0.5 * (lo + hi);
    for (int c = 0; c < dim; ++c) p.origin[static_cast<std::size_t>(c)] += shift * nu[static_cast<std::size_t>(c)];
  }
}

Frame rotate(const Frame& f, std::size_t normal, std::size_t tangent, double angle) {
  Frame g = f;
  const Vec& nu = f.plane.normals[normal];
  const Vec& tau = f.tangents[tangent];
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < nu.size(); ++i) {
    g.plane.normals[normal][i] = c * nu[i] + s * tau[i];
    g.tangents[tangent][i] = -s * nu[i] + c * tau[i];
  }
  return g;
}

struct Scored {
  Frame frame;
  double value;
};

// Pattern search over orientations (and offsets unless centered) minimizing the sup distance.
std::vector<Scored> sup_search(const WeightedSet& E, const CubeSample& cs, const PlaneFamily& f, const BetaOptions& o,
                               bool centered) {
  std::vector<Scored> seen;
  Frame best = fit_frame(E, cs.ids, nullptr, f);
  const double beta2_len = std::sqrt(power_sum(best.plane, E, cs.ids, 2.0) / std::max(cs.mass_q, 1e-300));
  if (centered) best.plane.origin.assign(cs.center, cs.center + E.dim());
  double best_val = sup_distance(best.plane, E, cs.ids);
  seen.push_back({best, best_val});
  auto consider = [&](Frame cand) {
    if (!centered) recenter(cand.plane, E, cs.ids);
    const double v = sup_distance(cand.plane, E, cs.ids);
    seen.push_back({cand, v});
    if (v < best_val) {
      best_val = v;
      best = std::move(cand);
      return true;
    }
    return false;
  };
  if (!centered) {
    const Frame base = best;
    consider(base);
    const int steps = std::max(o.offset_steps, 2);
    for (std::size_t k = 0; k < base.plane.normals.size(); ++k)
      for (int i = 0; i < steps; ++i) {
        const double delta = beta2_len * (-1.0 + 2.0 * i / (steps - 1));
        Frame cand = base;
        for (std::size_t c = 0; c < cand.plane.origin.size(); ++c) cand.plane.origin[c] += delta * base.plane.normals[k][c];
        const double v = sup_distance(cand.plane, E, cs.ids);
        seen.push_back({cand, v});
        if (v < best_val) {
          best_val = v;
          best = cand;
        }
      }
  }
  double angle = std::clamp(2.0 * best_val / std::max(cs.diam, 1e-300), 1e-3, 0.5);
  for (int round = 0; round < o.refine_rounds; ++round) {
    bool moved = true;
    for (int pass = 0; moved && pass < 4; ++pass) {
      moved = false;
      const Frame center = best;
      for (std::size_t k = 0; k < center.plane.normals.size(); ++k)
        for (std::size_t j = 0; j < center.tangents.size(); ++j)
          for (double sign : {1.0, -1.0}) moved = consider(rotate(center, k, j, sign * angle)) || moved;
    }
    angle *= 0.5;
  }
  return seen;
}

double set_distance(const WeightedSet& A, const double* y) { return A.index().nearest(y).second; }

// Bounding box of E in its principal frame (spatial PCA; the time axis is kept for parabolic clouds).
struct Window {
  bool active = false;
  Eigen::MatrixXd axes;
  Eigen::VectorXd lo, hi;

  bool contains(const double* z) const {
    if (!active) return true;
    const Eigen::VectorXd s = axes.transpose() * Eigen::Map<const Eigen::VectorXd>(z, axes.rows());
    return (s.array() >= lo.array()).all() && (s.array() <= hi.array()).all();
  }
};

Window sampling_window(const WeightedSet& E, bool enabled) {
  Window w;
  if (!enabled || E.size() == 0) return w;
  const int dim = E.dim();
  const int spatial = E.metric().is_parabolic() ? E.metric().spatial_dim() : dim;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(spatial);
  double total = 0.0;
  for (std::size_t i = 0; i < E.size(); ++i) {
    mean += E.weight(i) * Eigen::Map<const Eigen::VectorXd>(E.point(i), spatial);
    total += E.weight(i);
  }
  mean /= total;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(spatial, spatial);
  for (std::size_t i = 0; i < E.size(); ++i) {
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(E.point(i), spatial) - mean;
    cov.noalias() += E.weight(i) * v * v.transpose();
  }
  w.axes = Eigen::MatrixXd::Identity(dim, dim);
  w.axes.topLeftCorner(spatial, spatial) = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvectors();
  w.lo = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
  w.hi = -w.lo;
  for (std::size_t i = 0; i < E.size(); ++i) {
    const Eigen::VectorXd s = w.axes.transpose() * Eigen::Map<const Eigen::VectorXd>(E.point(i), dim);
    w.lo = w.lo.cwiseMin(s);
    w.hi = w.hi.cwiseMax(s);
  }
  w.lo.array() -= 1e-12;
  w.hi.array() += 1e-12;
  w.active = true;
  return w;
}

// dist(z, E), with distances below the smallest analysed scale r_min read as 0. On a grid sample the
// point farthest from every sample sits up to about 1.2 spacings away in the parabolic metric.
double gap(const WeightedSet& E, const double* z) {
  const double d = E.index().nearest(z).second;
  return d <= E.r_min() ? 0.0 : d;
}

// sup over z in A ∩ B(x_Q, kappa diam) of dist(z, E); 0 when the intersection is empty.
double reverse_sup(const Plane& p, const std::vector<Vec>& tangents, const WeightedSet& E, const CubeSample& cs,
                   const BetaOptions& o, const Window& win) {
  const int dim = E.dim();
  const Metric& metric = E.metric();
  const double R = o.kappa * cs.diam;
  double best = 0.0;
  Vec z(static_cast<std::size_t>(dim));
  auto project = [&](const double* y) {
    for (int c = 0; c < dim; ++c) z[static_cast<std::size_t>(c)] = y[c];
    for (const Vec& nu : p.normals) {
      double s = 0.0;
      for (int c = 0; c < dim; ++c) s += nu[static_cast<std::size_t>(c)] * (y[c] - p.origin[static_cast<std::size_t>(c)]);
      for (int c = 0; c < dim; ++c) z[static_cast<std::size_t>(c)] -= s * nu[static_cast<std::size_t>(c)];
    }
  };
  auto visit = [&]() {
    if (metric.distance(cs.center, z.data()) <= R && win.contains(z.data())) best = std::max(best, gap(E, z.data()));
  };
  const std::size_t stride =
      std::max<std::size_t>(1, (cs.ids.size() + static_cast<std::size_t>(o.max_projections) - 1) /
                                   static_cast<std::size_t>(std::max(o.max_projections, 1)));
  for (std::size_t i = 0; i < cs.ids.size(); i += stride) {
    project(E.point(static_cast<std::size_t>(cs.ids[i])));
    visit();
  }
  // Regular grid around the projection of x_Q.
  std::vector<Vec> dirs = tangents;
  std::vector<double> step;
  for (std::size_t i = 0; i < dirs.size(); ++i) step.push_back(R / o.plane_grid);
  if (metric.is_parabolic()) {
    Vec e(static_cast<std::size_t>(dim), 0.0);
    e.back() = 1.0;
    dirs.push_back(e);
    step.push_back(R * R / o.plane_grid);
  }
  if (dirs.empty() || dirs.size() > 3) return best;
  project(cs.center);
  const Vec c0 = z;
  const int g = o.plane_grid;
  std::vector<int> k(dirs.size(), -g);
  while (true) {
    for (int c = 0; c < dim; ++c) {
      double v = c0[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < dirs.size(); ++i) v += k[i] * step[i] * dirs[i][static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(c)] = v;
    }
    visit();
    std::size_t i = 0;
    while (i < k.size() && ++k[i] > g) k[i++] = -g;
    if (i == k.size()) break;
  }
  return best;
}

double reverse_sup_set(const WeightedSet& A, const WeightedSet& E, const CubeSample& cs, double kappa, const Window& win) {
  double best = 0.0;
  A.index().for_each_in_ball(cs.center, kappa * cs.diam, [&](int id, double) {
    if (win.contains(A.point(static_cast<std::size_t>(id)))) best = std::max(best, gap(E, A.point(static_cast<std::size_t>(id))));
  });
  return best;
}

}  // namespace

std::string PlaneFamily::name() const {
  switch (kind) {
    case FamilyKind::affine_planes:
      return "affine";
    case FamilyKind::parabolic_planes:
      return "parabolic";
    case FamilyKind::explicit_sets:
      return "sets";
  }
  return "unknown";
}

double Plane::distance(const double* y) const {
  double s2 = 0.0;
  const int dim = static_cast<int>(origin.size());
  for (const Vec& nu : normals) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) s += nu[static_cast<std::size_t>(c)] * (y[c] - origin[static_cast<std::size_t>(c)]);
    s2 += s * s;
  }
  return std::sqrt(s2);
}

BetaValue beta_q(const DyadicTree& t, int cube, const PlaneFamily& f, double q, const BetaOptions& o) {
  if (!(q > 0.0) || !std::isfinite(q)) throw std::invalid_argument("beta_q needs q in (0, inf)");
  const WeightedSet& E = t.space;
  check_family(f, E);
  const CubeSample cs = sample_cube(t, cube, o.kappa);
  BetaValue out;
  out.cube = cube;
  out.q = q;
  out.heuristic = f.kind != FamilyKind::explicit_sets && q != 2.0;
  if (cs.diam <= 0.0 || cs.ids.empty()) return out;
  auto finish = [&](double sum) {
    const double scaled = sum / std::pow(cs.diam, q);
    out.value = std::pow(scaled / cs.mass_q, 1.0 / q);
    out.normalized = std::pow(scaled / cs.mass_2q, 1.0 / q);
  };
  if (f.kind == FamilyKind::explicit_sets) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < f.sets.size(); ++s) {
      double sum = 0.0;
      for (int y : cs.ids)
        sum += E.weight(static_cast<std::size_t>(y)) * std::pow(set_distance(f.sets[s], E.point(static_cast<std::size_t>(y))), q);
      if (sum < best) {
        best = sum;
        out.set_id = static_cast<int>(s);
      }
    }
    finish(best);
    return out;
  }
  Frame best = fit_frame(E, cs.ids, nullptr, f);
  double best_sum = power_sum(best.plane, E, cs.ids, q);
  if (q != 2.0) {
    const double floor = 1e-9 * cs.diam;
    for (int r = 0; r < std::max(o.restarts, 1); ++r) {
      Frame cur = r == 0 ? best : rotate(best, 0, static_cast<std::size_t>(r) % std::max<std::size_t>(best.tangents.size(), 1),
                                         0.05 * r);
      if (r > 0 && best.tangents.empty()) break;
      Vec mult(cs.ids.size());
      for (int it = 0; it < o.max_iterations; ++it) {
        for (std::size_t i = 0; i < cs.ids.size(); ++i)
          mult[i] = std::pow(std::max(cur.plane.distance(E.point(static_cast<std::size_t>(cs.ids[i]))), floor), q - 2.0);
        cur = fit_frame(E, cs.ids, &mult, f);
        const double s = power_sum(cur.plane, E, cs.ids, q);
        if (s < best_sum) {
          best_sum = s;
          best = cur;
        }
      }
    }
  }
  out.plane = best.plane;
  finish(best_sum);
  return out;
}

BetaValue beta_inf(const DyadicTree& t, int cube, const PlaneFamily& f, const BetaOptions& o) {
  const WeightedSet& E = t.space;
  check_family(f, E);
  const CubeSample cs = sample_cube(t, cube, o.kappa);
  BetaValue out;
  out.cube = cube;
  out.q = kInfQ;
  if (cs.diam <= 0.0 || cs.ids.empty()) return out;
  if (f.kind == FamilyKind::explicit_sets) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < f.sets.size(); ++s) {
      double v = 0.0;
      for (int y : cs.ids) v = std::max(v, set_distance(f.sets[s], E.point(static_cast<std::size_t>(y))));
      if (v < best) {
        best = v;
        out.set_id = static_cast<int>(s);
      }
    }
    out.value = out.normalized = best / cs.diam;
    return out;
  }
  out.heuristic = true;
  const std::vector<Scored> seen = sup_search(E, cs, f, o, false);
  const auto it = std::min_element(seen.begin(), seen.end(), [](const Scored& a, const Scored& b) { return a.value < b.value; });
  out.plane = it->frame.plane;
  out.value = out.normalized = it->value / cs.diam;
  return out;
}

BetaValue beta_inf_centered(const DyadicTree& t, int cube, const PlaneFamily& f, const BetaOptions& o) {
  const WeightedSet& E = t.space;
  check_family(f, E);
  if (f.kind == FamilyKind::explicit_sets) throw std::invalid_argument("centered beta needs a plane family");
  const CubeSample cs = sample_cube(t, cube, o.kappa);
  BetaValue out;
  out.cube = cube;
  out.q = kInfQ;
  out.heuristic = true;
  if (cs.diam <= 0.0 || cs.ids.empty()) return out;
  const std::vector<Scored> seen = sup_search(E, cs, f, o, true);
  const auto it = std::min_element(seen.begin(), seen.end(), [](const Scored& a, const Scored& b) { return a.value < b.value; });
  out.plane = it->frame.plane;
  out.value = out.normalized = it->value / cs.diam;
  return out;
}

namespace {

BetaValue bbeta_in_window(const DyadicTree& t, int cube, const PlaneFamily& f, const BetaOptions& o, const Window& win) {
  const WeightedSet& E = t.space;
  const CubeSample cs = sample_cube(t, cube, o.kappa);
  BetaValue out;
  out.cube = cube;
  out.q = kInfQ;
  if (cs.diam <= 0.0 || cs.ids.empty()) return out;
  double best = std::numeric_limits<double>::infinity();
  if (f.kind == FamilyKind::explicit_sets) {
    for (std::size_t s = 0; s < f.sets.size(); ++s) {
      double first = 0.0;
      for (int y : cs.ids) first = std::max(first, set_distance(f.sets[s], E.point(static_cast<std::size_t>(y))));
      const double second = reverse_sup_set(f.sets[s], E, cs, o.kappa, win);
      if (first + second < best) {
        best = first + second;
        out.set_id = static_cast<int>(s);
        out.first_term = first / cs.diam;
        out.second_term = second / cs.diam;
      }
    }
    out.value = out.normalized = best / cs.diam;
    return out;
  }
  out.heuristic = true;
  std::vector<Scored> seen = sup_search(E, cs, f, o, false);
  std::stable_sort(seen.begin(), seen.end(), [](const Scored& a, const Scored& b) { return a.value < b.value; });
  const std::size_t count = std::min<std::size_t>(seen.size(), static_cast<std::size_t>(std::max(o.bilateral_candidates, 1)));
  for (std::size_t i = 0; i < count; ++i) {
    const double second = reverse_sup(seen[i].frame.plane, seen[i].frame.tangents, E, cs, o, win);
    if (seen[i].value + second < best) {
      best = seen[i].value + second;
      out.plane = seen[i].frame.plane;
      out.first_term = seen[i].value / cs.diam;
      out.second_term = second / cs.diam;
    }
  }
  out.value = out.normalized = best / cs.diam;
  return out;
}

}  // namespace

BetaValue bbeta(const DyadicTree& t, int cube, const PlaneFamily& f, const BetaOptions& o) {
  check_family(f, t.space);
  return bbeta_in_window(t, cube, f, o, sampling_window(t.space, o.clip_to_window));
}

std::vector<BetaValue> beta_values(const DyadicTree& t, const std::vector<int>& cubes, const PlaneFamily& f,
                                   BetaKind kind, double q, const BetaOptions& o) {
  check_family(f, t.space);
  std::vector<BetaValue> out(cubes.size());
  const Window win = sampling_window(t.space, kind == BetaKind::bilateral && o.clip_to_window);
  parallel_for(cubes.size(), [&](std::size_t i) {
    const int id = cubes[i];
    switch (kind) {
      case BetaKind::lq:
        out[i] = beta_q(t, id, f, q, o);
        break;
      case BetaKind::sup:
        out[i] = beta_inf(t, id, f, o);
        break;
      case BetaKind::bilateral:
        out[i] = bbeta_in_window(t, id, f, o, win);
        break;
    }
  });
  return out;
}

std::vector<BetaValue> beta_table(const DyadicTree& t, const PlaneFamily& f, BetaKind kind, double q,
                                  const BetaOptions& o) {
  std::vector<int> all(t.cubes.size());
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = static_cast<int>(c);
  return beta_values(t, all, f, kind, q, o);
}

std::string beta_table_csv(const DyadicTree& t, const std::vector<BetaValue>& table) {
  std::ostringstream os;
  os << std::setprecision(12) << "cube_id,k,q,beta,plane_params\n";
  for (const BetaValue& v : table) {
    os << v.cube << ',' << t.cube(v.cube).level << ',';
    if (std::isinf(v.q))
      os << "inf";
    else
      os << v.q;
    os << ',' << v.value;
    if (v.set_id >= 0) os << ',' << v.set_id;
    for (double x : v.plane.origin) os << ',' << x;
    for (const Vec& nu : v.plane.normals)
      for (double x : nu) os << ',' << x;
    os << '\n';
  }
  return os.str();
}

namespace {

GeometricLemmaReport carleson_report(const DyadicTree& t, std::vector<double> alpha, double bound) {
  const NormResult n = carleson_norm(DiscreteMeasure(t, std::move(alpha)), {}, kGlobal);
  GeometricLemmaReport r;
  r.worst_ratio = n.value;
  r.witness = n.witness;
  r.bound = bound;
  r.ok = n.value <= bound * (1.0 + 1e-12);
  return r;
}

void check_table(const DyadicTree& t, const std::vector<BetaValue>& table) {
  if (table.size() != t.cubes.size()) throw std::invalid_argument("beta table must have one entry per cube");
}

}  // namespace

GeometricLemmaReport glem_check(const DyadicTree& t, const std::vector<BetaValue>& table, double p, double M) {
  check_table(t, table);
  if (!(p > 0.0)) throw std::invalid_argument("glem_check needs p > 0");
  std::vector<double> alpha(t.cubes.size());
  for (std::size_t c = 0; c < alpha.size(); ++c) alpha[c] = std::pow(table[c].value, p) * t.cubes[c].mass;
  GeometricLemmaReport r = carleson_report(t, std::move(alpha), M);
  r.lemma = "GLem";
  r.p = p;
  r.q = table.empty() ? 0.0 : table.front().q;
  return r;
}

GeometricLemmaReport wglem_check(const DyadicTree& t, const std::vector<BetaValue>& table, double eps, double M) {
  check_table(t, table);
  std::vector<double> alpha(t.cubes.size(), 0.0);
  for (std::size_t c = 0; c < alpha.size(); ++c)
    if (table[c].value > eps) alpha[c] = t.cubes[c].mass;
  GeometricLemmaReport r = carleson_report(t, std::move(alpha), M);
  r.lemma = "WGL";
  r.eps = eps;
  r.q = kInfQ;
  return r;
}

GeometricLemmaReport bwglem_check(const DyadicTree& t, const std::vector<BetaValue>& table, double eps, double M) {
  GeometricLemmaReport r = wglem_check(t, table, eps, M);
  r.lemma = "BWGL";
  return r;
}

GeometricLemmaReport glem_check(const DyadicTree& t, const PlaneFamily& f, double p, double q, double M,
                                const BetaOptions& o) {
  return glem_check(t, std::isinf(q) ? beta_table(t, f, BetaKind::sup, q, o) : beta_table(t, f, BetaKind::lq, q, o), p, M);
}

GeometricLemmaReport wglem_check(const DyadicTree& t, const PlaneFamily& f, double eps, double M, const BetaOptions& o) {
  return wglem_check(t, beta_table(t, f, BetaKind::sup, kInfQ, o), eps, M);
}

GeometricLemmaReport bwglem_check(const DyadicTree& t, const PlaneFamily& f, double eps, double M, const BetaOptions& o) {
  return bwglem_check(t, beta_table(t, f, BetaKind::bilateral, kInfQ, o), eps, M);
}

namespace {

// Points of `other` within delta of some point of the cube.
std::vector<int> meeting_points(const DyadicTree& t, const DyadicTree& other, int cube, double delta) {
  std::vector<int> pts;
  for (int y : t.cube(cube).members)
    other.space.index().for_each_in_ball(t.space.point(static_cast<std::size_t>(y)), delta,
                                         [&](int id, double) { pts.push_back(id); });
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

double resolve(const DyadicTree& t, double delta) { return delta > 0.0 ? delta : matching_radius(t.space); }

}  // namespace

int companion_cube(const DyadicTree& t, const DyadicTree& other, int cube, const CompanionOptions& o) {
  if (cube < 0 || static_cast<std::size_t>(cube) >= t.cubes.size()) throw std::invalid_argument("companion_cube: cube id out of range");
  const std::vector<int> pts = meeting_points(t, other, cube, resolve(t, o.delta));
  if (pts.empty()) throw std::invalid_argument("companion_cube: cube " + std::to_string(cube) + " misses the other set");
  const double dq = t.cube(cube).diam;
  for (int k = other.k_max; k >= other.k_min; --k) {
    int best = -1;
    for (int p : pts) {
      const int c = other.cube_of(p, k);
      const double dc = other.cube(c).diam;
      if (dc >= o.lower * dq && dc <= o.upper * dq && (best < 0 || c < best)) best = c;
    }
    if (best >= 0) return best;
  }
  throw std::runtime_error("companion_cube: no admissible coarser cube for cube " + std::to_string(cube) +
                           " (window boundary)");
}

MultiplicityReport companion_multiplicity(const DyadicTree& t, const DyadicTree& other,
                                          const std::vector<int>& companions, const CompanionOptions& o) {
  std::map<int, int> chosen;
  for (int c : companions)
    if (c >= 0) ++chosen[c];
  MultiplicityReport r;
  for (const auto& [c, n] : chosen)
    if (n > r.max_multiplicity) {
      r.max_multiplicity = n;
      r.witness = c;
    }
  // Exhaustive count of cubes in the diameter window meeting each chosen companion.
  const double delta = resolve(t, o.delta);
  std::map<int, int> window;
  for (const Cube& q : t.cubes) {
    const std::vector<int> pts = meeting_points(t, other, q.id, delta);
    std::set<int> met;
    for (int p : pts)
      for (int k = other.k_min; k <= other.k_max; ++k) {
        const int c = other.cube_of(p, k);
        const double dc = other.cube(c).diam;
        if (chosen.count(c) && o.lower * q.diam <= dc && dc <= o.upper * q.diam) met.insert(c);
      }
    for (int c : met) ++window[c];
  }
  for (const auto& [c, n] : chosen) {
    r.bound = std::max(r.bound, window[c]);
    if (n > window[c]) r.ok = false;
  }
  return r;
}

double i_numbers(const DyadicTree& t, const WeightedSet& target, int cube, double q, double exclude_within, double kappa) {
  if (!(q > 0.0)) throw std::invalid_argument("i_numbers needs q > 0");
  const CubeSample cs = sample_cube(t, cube, kappa);
  if (cs.diam <= 0.0) return 0.0;
  const WeightedSet& E = t.space;
  double acc = 0.0;
  for (int z : cs.ids) {
    const double d = target.index().nearest(E.point(static_cast<std::size_t>(z))).second;
    if (d <= exclude_within || !(d < kappa * cs.diam)) continue;
    const double r = d / cs.diam;
    if (std::isinf(q))
      acc = std::max(acc, r);
    else
      acc += E.weight(static_cast<std::size_t>(z)) * std::pow(r, q);
  }
  return std::isinf(q) ? acc : std::pow(acc / cs.mass_q, 1.0 / q);
}

bool transfer_gate(double p, double q, double d) { return 1.0 / q - 1.0 / p + 1.0 / d > 0.0; }

TransferReport transfer_check(const DyadicTree& tree, const ApproximantCatalog& catalog, const PlaneFamily& family,
                              double theta, const TransferOptions& o) {
  const WeightedSet& E = tree.space;
  if (!(o.p > 0.0) || !(o.q > 0.0) || std::isinf(o.q))
    throw std::invalid_argument("transfer_check needs p > 0 and finite q > 0");
  if (!transfer_gate(o.p, o.q, E.d())) {
    std::ostringstream msg;
    msg << "(p, q) = (" << o.p << ", " << o.q << ") violates 1/q - 1/p + 1/d > 0 for d = " << E.d() << " (value "
        << 1.0 / o.q - 1.0 / o.p + 1.0 / E.d() << ")";
    throw std::invalid_argument(msg.str());
  }
  check_family(family, E);
  TransferReport rep;
  rep.theta = theta;
  const double delta = resolve(tree, o.companion.delta);
  rep.bp = bp_check(tree, catalog.sets, theta, {}, delta);
  if (!rep.bp.ok) {
    rep.ok = false;
    rep.messages.push_back("E does not have big pieces of the catalog at theta = " + std::to_string(theta) +
                           " (cube " + std::to_string(rep.bp.failing_cube) + ")");
    return rep;
  }

  // Member assigned to each cube through its containing cube R, propagated downward.
  std::vector<std::set<int>> inherited(tree.cubes.size());
  for (const Cube& q : tree.cubes) {
    if (q.parent >= 0) inherited[static_cast<std::size_t>(q.id)] = inherited[static_cast<std::size_t>(q.parent)];
    inherited[static_cast<std::size_t>(q.id)].insert(rep.bp.witnesses[static_cast<std::size_t>(q.id)].approximant);
  }
  std::set<int> used;
  for (const auto& s : inherited) used.insert(s.begin(), s.end());
  rep.members.assign(used.begin(), used.end());

  const std::vector<BetaValue> lq = beta_table(tree, family, BetaKind::lq, o.q, o.beta);
  const std::vector<BetaValue> sup = beta_table(tree, family, BetaKind::sup, kInfQ, o.beta);
  const std::vector<BetaValue> bil = beta_table(tree, family, BetaKind::bilateral, kInfQ, o.beta);

  rep.lq.name = "lq";
  rep.sup.name = "sup";
  rep.bilateral.name = "bilateral";
  auto update = [&](ComparisonStat& st, double lhs, double rhs, int cube) {
    ++st.pairs;
    if (rhs > o.tolerance) {
      const double r = lhs / rhs;
      if (r > st.constant) {
        st.constant = r;
        st.worst_cube = cube;
      }
    } else if (lhs > o.tolerance) {
      ++st.degenerate;
      if (st.worst_cube < 0) st.worst_cube = cube;
    }
  };

  double member_glem = 0.0, member_wgl = 0.0, member_bwgl = 0.0;
  int skipped = 0;
  for (int s : rep.members) {
    const WeightedSet& G = catalog.sets[static_cast<std::size_t>(s)];
    const DyadicTree mt = build_tree(G, o.member_tree);
    const std::vector<BetaValue> m_lq = beta_table(mt, family, BetaKind::lq, o.q, o.beta);
    const std::vector<BetaValue> m_sup = beta_table(mt, family, BetaKind::sup, kInfQ, o.beta);
    const std::vector<BetaValue> m_bil = beta_table(mt, family, BetaKind::bilateral, kInfQ, o.beta);
    rep.member_glem.push_back(glem_check(mt, m_lq, o.p, kInfQ).worst_ratio);
    rep.member_wgl.push_back(wglem_check(mt, m_sup, o.eps, kInfQ).worst_ratio);
    rep.member_bwgl.push_back(bwglem_check(mt, m_bil, o.eps, kInfQ).worst_ratio);
    member_glem = std::max(member_glem, rep.member_glem.back());
    member_wgl = std::max(member_wgl, rep.member_wgl.back());
    member_bwgl = std::max(member_bwgl, rep.member_bwgl.back());

    std::vector<int> companions;
    for (const Cube& q : tree.cubes) {
      if (!inherited[static_cast<std::size_t>(q.id)].count(s)) continue;
      int comp = -1;
      try {
        comp = companion_cube(tree, mt, q.id, o.companion);
      } catch (const std::invalid_argument&) {
        continue;  // Q misses this big piece
      } catch (const std::runtime_error&) {
        ++skipped;
        continue;
      }
      companions.push_back(comp);
      const double iq = i_numbers(tree, G, q.id, o.q, 0.0, o.beta.kappa);
      const double iinf = i_numbers(tree, G, q.id, kInfQ, 0.0, o.beta.kappa);
      const double iinf_tilde =
          i_numbers(mt, E, comp, kInfQ, 0.0, o.beta.kappa) * mt.cube(comp).diam / std::max(q.diam, 1e-300);
      const std::size_t c = static_cast<std::size_t>(q.id);
      const std::size_t cc = static_cast<std::size_t>(comp);
      update(rep.lq, lq[c].value, m_lq[cc].value + iq, q.id);
      update(rep.sup, sup[c].value, m_sup[cc].value + iinf, q.id);
      update(rep.bilateral, bil[c].value, m_bil[cc].value + iinf + iinf_tilde, q.id);
    }
    const MultiplicityReport mr = companion_multiplicity(tree, mt, companions, o.companion);
    if (mr.max_multiplicity > rep.multiplicity.max_multiplicity) rep.multiplicity = mr;
    if (!mr.ok) rep.multiplicity.ok = false;
  }
  if (skipped > 0)
    rep.messages.push_back(std::to_string(skipped) + " cube/member pairs had no admissible companion (window boundary)");

  rep.glem = glem_check(tree, lq, o.p, kInfQ);
  rep.eps_wgl = std::max(1.0, rep.sup.constant) * o.eps;
  rep.eps_bwgl = std::max(1.0, rep.bilateral.constant) * o.eps;
  rep.wgl = wglem_check(tree, sup, rep.eps_wgl, kInfQ);
  rep.bwgl = bwglem_check(tree, bil, rep.eps_bwgl, kInfQ);
  (void)member_glem;
  (void)member_wgl;
  (void)member_bwgl;

  for (const ComparisonStat* st : {&rep.lq, &rep.sup, &rep.bilateral})
    if (st->degenerate > 0) {
      rep.ok = false;
      rep.messages.push_back(st->name + " comparison has " + std::to_string(st->degenerate) +
                             " cubes with a vanishing right-hand side");
    }
  if (!rep.multiplicity.ok) {
    rep.ok = false;
    rep.messages.push_back("companion multiplicity exceeds the window count");
  }
  if (!std::isfinite(rep.glem.worst_ratio)) {
    rep.ok = false;
    rep.messages.push_back("GLem constant for E is not finite");
  }
  return rep;
}

nlohmann::json to_json(const BetaValue& v) {
  nlohmann::json j = {{"cube", v.cube}, {"value", v.value}, {"normalized", v.normalized}, {"heuristic", v.heuristic}};
  j["q"] = std::isinf(v.q) ? nlohmann::json("inf") : nlohmann::json(v.q);
  if (v.set_id >= 0) j["set_id"] = v.set_id;
  if (!v.plane.origin.empty()) j["plane"] = {{"origin", v.plane.origin}, {"normals", v.plane.normals}};
  if (v.first_term > 0.0 || v.second_term > 0.0) {
    j["first_term"] = v.first_term;
    j["second_term"] = v.second_term;
  }
  return j;
}

nlohmann::json to_json(const GeometricLemmaReport& r) {
  auto num = [](double x) { return std::isinf(x) ? nlohmann::json("inf") : nlohmann::json(x); };
  return {{"lemma", r.lemma}, {"ok", r.ok},         {"worst_ratio", r.worst_ratio}, {"witness", r.witness},
          {"bound", num(r.bound)}, {"p", r.p}, {"q", num(r.q)}, {"eps", r.eps}};
}

nlohmann::json to_json(const TransferReport& r) {
  auto stat = [](const ComparisonStat& s) {
    return nlohmann::json{{"constant", s.constant}, {"worst_cube", s.worst_cube}, {"pairs", s.pairs},
                          {"degenerate", s.degenerate}};
  };
  nlohmann::json bp = to_json(r.bp);
  bp.erase("witnesses");
  return {{"ok", r.ok},
          {"theta", r.theta},
          {"big_pieces", bp},
          {"members", r.members},
          {"member_glem", r.member_glem},
          {"member_wgl", r.member_wgl},
          {"member_bwgl", r.member_bwgl},
          {"comparison_lq", stat(r.lq)},
          {"comparison_sup", stat(r.sup)},
          {"comparison_bilateral", stat(r.bilateral)},
          {"multiplicity",
           {{"max", r.multiplicity.max_multiplicity}, {"witness", r.multiplicity.witness}, {"bound", r.multiplicity.bound},
            {"ok", r.multiplicity.ok}}},
          {"glem", to_json(r.glem)},
          {"wgl", to_json(r.wgl)},
          {"bwgl", to_json(r.bwgl)},
          {"eps_wgl", r.eps_wgl},
          {"eps_bwgl", r.eps_bwgl},
          {"messages", r.messages}};
}

}  // namespace gmt
