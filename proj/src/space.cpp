#include "gmt/space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gmt/parallel.hpp"

namespace gmt {

WeightedSet::WeightedSet(const Metric& metric, std::vector<double> coords, std::vector<double> weights, double d,
                         double r_min, double r_max)
    : d_(d), r_min_(r_min), r_max_(r_max) {
  const std::size_t dim = static_cast<std::size_t>(metric.dim());
  if (weights.empty()) throw std::invalid_argument("point cloud is empty");
  if (coords.size() != weights.size() * dim)
    throw std::invalid_argument("coordinate array does not match point count and metric dimension");
  if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument("regularity dimension d must be positive");
  if (!(r_min > 0.0) || !(r_max > r_min) || !std::isfinite(r_max))
    throw std::invalid_argument("scale range must satisfy 0 < r_min < r_max");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be positive and finite");
    total += w;
  }
  for (double c : coords)
    if (!std::isfinite(c)) throw std::invalid_argument("coordinates must be finite");

  auto data = std::make_shared<Data>();
  data->metric = metric;
  data->coords = std::move(coords);
  data->weights = std::move(weights);
  data->total_mass = total;
  data->index = KdTree(metric, data->coords.data(), data->weights.size());
  data->index.attach_weights(data->weights.data());
  data_ = std::move(data);
}

WeightedSet WeightedSet::with_scale_range(double r_min, double r_max) const {
  if (!(r_min > 0.0) || !(r_max > r_min)) throw std::invalid_argument("scale range must satisfy 0 < r_min < r_max");
  WeightedSet out = *this;
  out.r_min_ = r_min;
  out.r_max_ = r_max;
  return out;
}

WeightedSet WeightedSet::subset(const std::vector<int>& ids, double r_min, double r_max) const {
  const std::size_t dim = static_cast<std::size_t>(this->dim());
  std::vector<double> c;
  std::vector<double> w;
  c.reserve(ids.size() * dim);
  w.reserve(ids.size());
  for (int id : ids) {
    const double* p = point(static_cast<std::size_t>(id));
    c.insert(c.end(), p, p + dim);
    w.push_back(weight(static_cast<std::size_t>(id)));
  }
  return WeightedSet(metric(), std::move(c), std::move(w), d_, r_min, r_max);
}

double ball_mass(const WeightedSet& set, const double* center, double r) {
  double m = 0.0;
  set.index().for_each_in_ball(center, r, [&](int id, double) { m += set.weight(static_cast<std::size_t>(id)); });
  return m;
}

double ball_mass(const WeightedSet& set, std::size_t center_index, double r) {
  return ball_mass(set, set.point(center_index), r);
}

std::vector<double> log_radii(double r_min, double r_max, int per_octave) {
  if (per_octave < 1) throw std::invalid_argument("radii per octave must be >= 1");
  std::vector<double> radii;
  for (int j = 0;; ++j) {
    const double r = r_min * std::exp2(static_cast<double>(j) / per_octave);
    if (r > r_max * (1.0 - 1e-12)) break;
    radii.push_back(r);
  }
  radii.push_back(r_max);
  return radii;
}

namespace {

struct BlockStats {
  std::vector<double> mins, maxs;
  double hi = -1.0, lo = std::numeric_limits<double>::infinity();
  int hi_center = -1, lo_center = -1;
  std::size_t hi_radius = 0, lo_radius = 0;
  int isolated_center = -1;
  std::size_t isolated_radius = 0;
};

}  // namespace

RegularityReport regularity_check(const WeightedSet& set, const RegularityOptions& opts) {
  RegularityReport rep;
  rep.d = set.d();
  rep.r_min = set.r_min();
  rep.r_max = set.r_max();
  rep.set_diameter = diameter(set);
  const std::vector<double> radii = log_radii(set.r_min(), set.r_max(), opts.radii_per_octave);
  const std::size_t nr = radii.size();
  std::vector<double> scale_pow(nr);
  for (std::size_t j = 0; j < nr; ++j) scale_pow[j] = std::pow(radii[j], set.d());

  std::vector<int> centers = opts.centers;
  if (centers.empty() && opts.max_centers > 0 && set.size() > static_cast<std::size_t>(opts.max_centers)) {
    for (int i = 0; i < opts.max_centers; ++i)
      centers.push_back(static_cast<int>(static_cast<std::size_t>(i) * set.size() / static_cast<std::size_t>(opts.max_centers)));
  }
  if (centers.empty()) {
    centers.resize(set.size());
    std::iota(centers.begin(), centers.end(), 0);
  }
  for (int c : centers)
    if (c < 0 || static_cast<std::size_t>(c) >= set.size()) throw std::out_of_range("center index out of range");

  const std::size_t nblocks = std::min<std::size_t>(centers.size(), 256);
  std::vector<BlockStats> blocks(nblocks);
  parallel_for(nblocks, [&](std::size_t b) {
    BlockStats& st = blocks[b];
    st.mins.assign(nr, std::numeric_limits<double>::infinity());
    st.maxs.assign(nr, 0.0);
    const std::size_t begin = b * centers.size() / nblocks, end = (b + 1) * centers.size() / nblocks;
    std::vector<double> shell(nr);
    for (std::size_t ci = begin; ci < end; ++ci) {
      const int c = centers[ci];
      const double* x = set.point(static_cast<std::size_t>(c));
      std::fill(shell.begin(), shell.end(), 0.0);
      set.index().accumulate_shells(x, radii, shell.data());
      // A ball holding nothing but its own center does not see the set at this scale;
      // the witness is the first such center and its largest such radius.
      const double nn = set.index().nearest_if(x, [c](int id) { return id != c; }, set.r_max()).second;
      double mass = 0.0;
      for (std::size_t j = 0; j < nr; ++j) {
        mass += shell[j];
        if (nn > radii[j] && (st.isolated_center < 0 || st.isolated_center == c)) {
          st.isolated_center = c;
          st.isolated_radius = j;
        }
        const double ratio = mass / scale_pow[j];
        st.mins[j] = std::min(st.mins[j], ratio);
        st.maxs[j] = std::max(st.maxs[j], ratio);
        if (ratio > st.hi) {
          st.hi = ratio;
          st.hi_center = c;
          st.hi_radius = j;
        }
        if (ratio < st.lo) {
          st.lo = ratio;
          st.lo_center = c;
          st.lo_radius = j;
        }
      }
    }
  });

  rep.per_scale.resize(nr);
  for (std::size_t j = 0; j < nr; ++j)
    rep.per_scale[j] = {radii[j], std::numeric_limits<double>::infinity(), 0.0};
  double hi = -1.0, lo = std::numeric_limits<double>::infinity();
  int hi_c = -1, lo_c = -1, iso_c = -1;
  std::size_t hi_r = 0, lo_r = 0, iso_r = 0;
  for (const BlockStats& st : blocks) {
    for (std::size_t j = 0; j < nr; ++j) {
      rep.per_scale[j].min_ratio = std::min(rep.per_scale[j].min_ratio, st.mins[j]);
      rep.per_scale[j].max_ratio = std::max(rep.per_scale[j].max_ratio, st.maxs[j]);
    }
    if (st.hi > hi) {
      hi = st.hi;
      hi_c = st.hi_center;
      hi_r = st.hi_radius;
    }
    if (st.lo < lo) {
      lo = st.lo;
      lo_c = st.lo_center;
      lo_r = st.lo_radius;
    }
    if (iso_c < 0 && st.isolated_center >= 0) {
      iso_c = st.isolated_center;
      iso_r = st.isolated_radius;
    }
  }

  if (iso_c >= 0) {
    rep.ok = false;
    rep.worst_center = iso_c;
    rep.worst_radius = radii[iso_r];
    rep.worst_ratio = ball_mass(set, static_cast<std::size_t>(iso_c), radii[iso_r]) / scale_pow[iso_r];
    std::ostringstream msg;
    msg << "lower regularity violated: ball at point " << iso_c << " of radius " << radii[iso_r]
        << " contains no other point of the set";
    rep.failure = msg.str();
    return rep;
  }
  if (!(lo > 0.0)) {
    rep.ok = false;
    rep.worst_center = lo_c;
    rep.worst_radius = radii[lo_r];
    rep.worst_ratio = lo;
    rep.failure = "lower regularity violated: zero ball mass ratio";
    return rep;
  }
  rep.ok = true;
  if (hi >= 1.0 / lo) {
    rep.worst_center = hi_c;
    rep.worst_radius = radii[hi_r];
    rep.worst_ratio = hi;
  } else {
    rep.worst_center = lo_c;
    rep.worst_radius = radii[lo_r];
    rep.worst_ratio = lo;
  }
  rep.constant_C = std::max({1.0, hi, 1.0 / lo});
  return rep;
}

LocalizedSet localize(const WeightedSet& set, std::size_t x, double r) {
  if (x >= set.size()) throw std::out_of_range("localize: point index out of range");
  if (!(r >= set.r_min()) || !(r <= set.r_max()))
    throw std::invalid_argument("localize: radius outside the scale range");
  std::vector<char> in(set.size(), 0);
  std::vector<int> members;
  set.index().for_each_in_ball(set.point(x), r, [&](int id, double) {
    in[static_cast<std::size_t>(id)] = 1;
    members.push_back(id);
  });
  const int cap = static_cast<int>(std::ceil(std::log2(r / set.r_min()))) + 4;
  LocalizedSet out;
  for (int k = 1; k <= cap; ++k) {
    const double radius = std::ldexp(r, -k);
    std::vector<int> added;
    for (int z : members) {
      set.index().for_each_in_ball(set.point(static_cast<std::size_t>(z)), radius, [&](int id, double) {
        if (!in[static_cast<std::size_t>(id)]) {
          in[static_cast<std::size_t>(id)] = 1;
          added.push_back(id);
        }
      });
    }
    out.steps = k;
    if (added.empty()) {
      out.stabilized = true;
      break;
    }
    members.insert(members.end(), added.begin(), added.end());
  }
  std::sort(members.begin(), members.end());
  out.ids = members;
  out.set = set.subset(members, set.r_min(), 10.0 * r);
  return out;
}

RegularityReport scale_trade(const RegularityReport& report, double R, double R_prime) {
  if (!(R > 0.0)) throw std::invalid_argument("scale_trade: R must be positive");
  if (R_prime < R) throw std::invalid_argument("scale_trade: R' must not be below R");
  if (!(report.set_diameter < R)) throw std::invalid_argument("scale_trade: set diameter must be below R");
  RegularityReport out = report;
  if (R_prime == R) return out;
  out.r_max = R_prime;
  if (out.ok) out.constant_C = report.constant_C * std::pow(R_prime / R, report.d);
  return out;
}

namespace {

// Exact diameter of the listed points; c is any reference point used for triangle-inequality pruning.
double pruned_diameter(const WeightedSet& set, std::vector<int> ids) {
  if (ids.size() < 2) return 0.0;
  const Metric& m = set.metric();
  const int dim = set.dim();
  std::vector<double> lo(static_cast<std::size_t>(dim), std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<std::size_t>(dim), -std::numeric_limits<double>::infinity());
  for (int id : ids) {
    const double* p = set.point(static_cast<std::size_t>(id));
    for (int c = 0; c < dim; ++c) {
      lo[static_cast<std::size_t>(c)] = std::min(lo[static_cast<std::size_t>(c)], p[c]);
      hi[static_cast<std::size_t>(c)] = std::max(hi[static_cast<std::size_t>(c)], p[c]);
    }
  }
  std::vector<double> center(static_cast<std::size_t>(dim));
  for (int c = 0; c < dim; ++c)
    center[static_cast<std::size_t>(c)] = 0.5 * (lo[static_cast<std::size_t>(c)] + hi[static_cast<std::size_t>(c)]);
  std::vector<std::pair<double, int>> order;
  order.reserve(ids.size());
  for (int id : ids) order.emplace_back(m.distance(center.data(), set.point(static_cast<std::size_t>(id))), id);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  double best = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i].first + order[0].first <= best) break;
    const double* p = set.point(static_cast<std::size_t>(order[i].second));
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (order[i].first + order[j].first <= best) break;
      best = std::max(best, m.distance(p, set.point(static_cast<std::size_t>(order[j].second))));
    }
  }
  return best;
}

}  // namespace

double diameter(const WeightedSet& set) {
  std::vector<int> ids(set.size());
  std::iota(ids.begin(), ids.end(), 0);
  return pruned_diameter(set, std::move(ids));
}

double diameter_of(const WeightedSet& set, const std::vector<int>& ids) { return pruned_diameter(set, ids); }

double max_nn_distance(const WeightedSet& set) {
  if (set.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> nn(set.size());
  parallel_for(set.size(), [&](std::size_t i) {
    nn[i] = set.index().nearest_if(set.point(i), [i](int id) { return static_cast<std::size_t>(id) != i; }).second;
  });
  return *std::max_element(nn.begin(), nn.end());
}

nlohmann::json to_json(const RegularityReport& report) {
  nlohmann::json j;
  j["ok"] = report.ok;
  if (report.ok) j["constant_C"] = report.constant_C;
  else j["constant_C"] = nullptr;
  j["failure"] = report.failure;
  j["worst_ball"] = {{"center", report.worst_center}, {"radius", report.worst_radius}, {"ratio", report.worst_ratio}};
  j["d"] = report.d;
  j["scale_range"] = {report.r_min, report.r_max};
  j["set_diameter"] = report.set_diameter;
  nlohmann::json scales = nlohmann::json::array();
  for (const ScaleStat& s : report.per_scale) scales.push_back({s.radius, s.min_ratio, s.max_ratio});
  j["per_scale"] = scales;
  return j;
}

std::string sidecar_path_for(const std::string& csv_path) {
  const auto dot = csv_path.rfind('.');
  const auto slash = csv_path.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) return csv_path.substr(0, dot) + ".json";
  return csv_path + ".json";
}

void write_cloud(const WeightedSet& set, const std::string& csv_path, const std::string& sidecar_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  const int n = set.metric().spatial_dim();
  for (int i = 1; i <= n; ++i) csv << 'x' << i << ',';
  if (set.metric().is_parabolic()) csv << "t,";
  csv << "w\n";
  csv << std::setprecision(17);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double* p = set.point(i);
    for (int c = 0; c < set.dim(); ++c) csv << p[c] << ',';
    csv << set.weight(i) << '\n';
  }
  nlohmann::json side = {{"metric", set.metric().name()}, {"n", n},           {"d", set.d()},
                         {"r_min", set.r_min()},          {"r_max", set.r_max()}};
  std::ofstream js(sidecar_path);
  if (!js) throw std::runtime_error("cannot write " + sidecar_path);
  js << side.dump(2) << '\n';
}

WeightedSet read_cloud(const std::string& csv_path, const std::string& sidecar_path) {
  std::ifstream js(sidecar_path);
  if (!js) throw std::invalid_argument("cannot open sidecar " + sidecar_path);
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed sidecar " + sidecar_path + ": " + e.what());
  }
  for (const char* key : {"metric", "n", "d", "r_min", "r_max"})
    if (!side.contains(key)) throw std::invalid_argument(std::string("sidecar missing field '") + key + "'");
  const Metric metric = Metric::from_name(side["metric"].get<std::string>(), side["n"].get<int>());

  std::ifstream csv(csv_path);
  if (!csv) throw std::invalid_argument("cannot open " + csv_path);
  std::string line;
  if (!std::getline(csv, line)) throw std::invalid_argument("empty point file " + csv_path);
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols != static_cast<std::size_t>(metric.dim()) + 1)
    throw std::invalid_argument("column count in " + csv_path + " does not match the sidecar metric");
  std::vector<double> coords, weights;
  std::size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t pos = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t next = c + 1 < cols ? line.find(',', pos) : line.size();
      if (next == std::string::npos) throw std::invalid_argument("short row at line " + std::to_string(lineno));
      const std::string field = line.substr(pos, next - pos);
      char* endp = nullptr;
      const double v = std::strtod(field.c_str(), &endp);
      if (endp == field.c_str()) throw std::invalid_argument("bad number at line " + std::to_string(lineno));
      (c + 1 < cols ? coords : weights).push_back(v);
      pos = next + 1;
    }
  }
  return WeightedSet(metric, std::move(coords), std::move(weights), side["d"].get<double>(),
                     side["r_min"].get<double>(), side["r_max"].get<double>());
}

}  // namespace gmt
