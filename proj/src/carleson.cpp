#include "gmt/carleson.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace gmt {

namespace {

constexpr double kRoundoff = 1e-12;

void check_cube(const DyadicTree& t, int c, const char* what) {
  if (c < 0 || static_cast<std::size_t>(c) >= t.cubes.size())
    throw std::invalid_argument(std::string(what) + ": cube id out of range");
}

// Marks every cube contained in some member of F; validates that F is disjoint.
std::vector<char> covered_by(const DyadicTree& t, const std::vector<int>& family) {
  std::vector<char> cov(t.cubes.size(), 0);
  for (int f : family) {
    check_cube(t, f, "family");
    for (int c : t.subtree(f)) {
      if (cov[static_cast<std::size_t>(c)])
        throw std::invalid_argument("family is not pairwise disjoint (cube " + std::to_string(f) + ")");
      cov[static_cast<std::size_t>(c)] = 1;
    }
  }
  return cov;
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(const DyadicTree& t, std::vector<double> coefficients)
    : tree(&t), alpha(std::move(coefficients)) {
  if (alpha.size() != t.cubes.size()) throw std::invalid_argument("one coefficient per cube is required");
  for (double a : alpha)
    if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("coefficients must be finite and nonnegative");
}

double measure_of(const DiscreteMeasure& m, const std::vector<int>& cubes) {
  std::vector<int> ids = cubes;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  double s = 0.0;
  for (int c : ids) {
    check_cube(*m.tree, c, "measure_of");
    s += m.alpha[static_cast<std::size_t>(c)];
  }
  return s;
}

NormResult carleson_norm(const DiscreteMeasure& m, const std::vector<int>& family, int q0) {
  const DyadicTree& t = *m.tree;
  if (q0 != kGlobal) check_cube(t, q0, "carleson_norm");
  const std::vector<char> cov = covered_by(t, family);
  if (q0 != kGlobal)
    for (int f : family)
      if (!t.contains(q0, f)) throw std::invalid_argument("family member outside Q0");

  // Children always carry larger ids than their parents, so one reverse sweep aggregates bottom-up.
  std::vector<double> agg(t.cubes.size(), 0.0);
  for (std::size_t i = t.cubes.size(); i-- > 0;) {
    double s = cov[i] ? 0.0 : m.alpha[i];
    for (int ch : t.cubes[i].children) s += agg[static_cast<std::size_t>(ch)];
    agg[i] = s;
  }
  const double floor_mass = kRoundoff * t.space.total_mass();
  NormResult out;
  auto visit = [&](int c) {
    const Cube& q = t.cube(c);
    if (q.mass < floor_mass) return;
    const double r = agg[static_cast<std::size_t>(c)] / q.mass;
    if (out.witness < 0 || r > out.value) {
      out.value = r;
      out.witness = c;
    }
  };
  if (q0 == kGlobal) {
    for (const Cube& q : t.cubes) visit(q.id);
  } else {
    for (int c : t.subtree(q0)) visit(c);
  }
  return out;
}

PackingResult packing_check(const DyadicTree& t, const std::vector<int>& marked, double c_pack) {
  std::vector<double> alpha(t.cubes.size(), 0.0);
  for (int c : marked) {
    check_cube(t, c, "packing_check");
    alpha[static_cast<std::size_t>(c)] = t.cube(c).mass;
  }
  const NormResult n = carleson_norm(DiscreteMeasure(t, std::move(alpha)), {}, kGlobal);
  PackingResult out;
  out.worst_ratio = n.value;
  out.witness = n.witness;
  out.bound = c_pack;
  out.ok = n.value <= c_pack * (1.0 + kRoundoff);
  return out;
}

ExtrapolationResult extrapolate(const DiscreteMeasure& m, int q, double a, double b) {
  const DyadicTree& t = *m.tree;
  check_cube(t, q, "extrapolate");
  if (!(a >= 0.0) || !(b > 0.0)) throw std::invalid_argument("extrapolate needs a >= 0 and b > 0");
  const std::vector<int> below = t.subtree(q);
  const double mu_q = t.cube(q).mass;
  double total = 0.0;
  for (int c : below) total += m.alpha[static_cast<std::size_t>(c)];
  if (total > (a + b) * mu_q * (1.0 + kRoundoff))
    throw std::invalid_argument("extrapolate: m(D_Q) exceeds (a + b) mu(Q)");

  ExtrapolationResult r;
  r.a = a;
  r.b = b;
  r.cube_mass = mu_q;
  r.norm_bound = kExtrapolationConstant * b;
  r.mass_ratio_bound = (a + b) / (a + 2.0 * b);

  // Descend from Q, accumulating alpha / mu along the chain; stop at the first cube past 2b.
  struct Item {
    int cube;
    double chain;
  };
  std::vector<Item> stack{{q, 0.0}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const Cube& c = t.cube(it.cube);
    const double chain = it.chain + m.alpha[static_cast<std::size_t>(c.id)] / c.mass;
    if (chain > 2.0 * b) {
      r.family.push_back(c.id);
      continue;
    }
    for (auto ch = c.children.rbegin(); ch != c.children.rend(); ++ch) stack.push_back({*ch, chain});
  }
  std::sort(r.family.begin(), r.family.end());

  r.sawtooth_norm = carleson_norm(m, r.family, q).value;
  for (int f : r.family) {
    double inner = 0.0;
    for (int c : t.subtree(f))
      if (c != f) inner += m.alpha[static_cast<std::size_t>(c)];
    if (inner > a * t.cube(f).mass) {
      r.bad_subfamily.push_back(f);
      r.bad_union_mass += t.cube(f).mass;
    }
  }

  if (r.sawtooth_norm > r.norm_bound * (1.0 + kRoundoff)) {
    std::ostringstream msg;
    msg << "extrapolation certificate failed: sawtooth norm " << r.sawtooth_norm << " exceeds " << r.norm_bound;
    throw std::runtime_error(msg.str());
  }
  if (r.bad_union_mass > r.mass_ratio_bound * mu_q * (1.0 + kRoundoff)) {
    std::ostringstream msg;
    msg << "extrapolation certificate failed: bad mass " << r.bad_union_mass << " exceeds "
        << r.mass_ratio_bound * mu_q;
    throw std::runtime_error(msg.str());
  }
  return r;
}

nlohmann::json to_json(const ExtrapolationResult& r) {
  return {{"family", r.family},
          {"bad_subfamily", r.bad_subfamily},
          {"a", r.a},
          {"b", r.b},
          {"declared_C", kExtrapolationConstant},
          {"sawtooth_norm", r.sawtooth_norm},
          {"norm_ratio", r.norm_bound > 0 ? r.sawtooth_norm / r.norm_bound : 0.0},
          {"norm_ok", r.sawtooth_norm <= r.norm_bound * (1.0 + kRoundoff)},
          {"bad_union_mass", r.bad_union_mass},
          {"mass_ratio", r.cube_mass > 0 ? r.bad_union_mass / r.cube_mass : 0.0},
          {"mass_ratio_bound", r.mass_ratio_bound},
          {"mass_ok", r.bad_union_mass <= r.mass_ratio_bound * r.cube_mass * (1.0 + kRoundoff)}};
}

nlohmann::json to_json(const PackingResult& r) {
  return {{"ok", r.ok}, {"worst_ratio", r.worst_ratio}, {"witness", r.witness}, {"bound", r.bound}};
}

DiscreteMeasure read_alpha_csv(const DyadicTree& tree, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::vector<double> alpha(tree.cubes.size(), 0.0);
  std::string line;
  std::getline(in, line);
  if (line.rfind("cube_id", 0) != 0) throw std::invalid_argument("alpha file must start with 'cube_id,alpha'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    long id = -1;
    char comma = 0;
    double v = 0.0;
    if (!(row >> id >> comma >> v) || comma != ',') throw std::invalid_argument("malformed alpha row: " + line);
    if (id < 0 || static_cast<std::size_t>(id) >= alpha.size()) throw std::invalid_argument("alpha cube id out of range");
    alpha[static_cast<std::size_t>(id)] = v;
  }
  return DiscreteMeasure(tree, std::move(alpha));
}

void write_alpha_csv(const DiscreteMeasure& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "cube_id,alpha\n" << std::setprecision(17);
  for (std::size_t i = 0; i < m.alpha.size(); ++i)
    if (m.alpha[i] != 0.0) out << i << ',' << m.alpha[i] << '\n';
}

}  // namespace gmt
