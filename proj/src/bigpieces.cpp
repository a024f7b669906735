#include "gmt/bigpieces.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include "gmt/parallel.hpp"

namespace gmt {

namespace {

constexpr double kRoundoff = 1e-12;
constexpr double kMassTol = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

double resolve_delta(const WeightedSet& E, double delta) { return delta > 0.0 ? delta : matching_radius(E); }

std::vector<char> near_flags(const WeightedSet& E, const WeightedSet& set, double delta) {
  std::vector<char> out(E.size(), 0);
  if (set.empty()) return out;
  parallel_for(E.size(), [&](std::size_t y) {
    out[y] = set.index().any_within(E.point(y), delta, [](int) { return true; }) ? 1 : 0;
  });
  return out;
}

void check_cube(const DyadicTree& t, int c, const char* what) {
  if (c < 0 || static_cast<std::size_t>(c) >= t.cubes.size())
    throw std::invalid_argument(std::string(what) + ": cube id out of range");
}

bool chain_in_regime(const DyadicTree& t, const std::vector<int>& reg, int point, int q0) {
  const Cube& q = t.cube(q0);
  if (t.cube_of(point, q.level) != q0) throw std::invalid_argument("point does not belong to Q0");
  const int r = reg[static_cast<std::size_t>(q0)];
  if (r < 0) return false;
  for (int k = q.level; k <= t.k_max; ++k)
    if (reg[static_cast<std::size_t>(t.cube_of(point, k))] != r) return false;
  return true;
}

int sawtooth_regime(const DyadicTree& t, const std::vector<int>& reg, const DiscreteMeasure& m, int q0,
                    const std::vector<int>& family) {
  check_cube(t, q0, "regime_of_sawtooth");
  if (std::find(family.begin(), family.end(), q0) != family.end())
    throw std::invalid_argument("regime_of_sawtooth: Q0 belongs to the family");
  const NormResult n = carleson_norm(m, family, q0);
  if (n.value > 0.5 * (1.0 + kRoundoff))
    throw std::invalid_argument("regime_of_sawtooth: sawtooth Carleson norm " + std::to_string(n.value) +
                                " exceeds 1/2");
  const int s0 = reg[static_cast<std::size_t>(q0)];
  if (s0 < 0) throw SawtoothRegimeError("Q0 (cube " + std::to_string(q0) + ") is a bad cube", q0);
  for (int c : sawtooth(t, q0, family))
    if (reg[static_cast<std::size_t>(c)] != s0)
      throw SawtoothRegimeError("sawtooth cube " + std::to_string(c) + " lies outside the regime of Q0", c);
  return s0;
}

// True when no point of cube a lies closer than `need` to cube b.
bool cubes_apart(const DyadicTree& t, int a, int b, double need) {
  const Cube& qa = t.cube(a);
  const Cube& qb = t.cube(b);
  const WeightedSet& E = t.space;
  if (E.distance(static_cast<std::size_t>(qa.center), static_cast<std::size_t>(qb.center)) - qa.diam - qb.diam >= need)
    return true;
  const Cube& small = qa.members.size() <= qb.members.size() ? qa : qb;
  const Cube& other = &small == &qa ? qb : qa;
  for (int p : small.members) {
    const auto hit = E.index().nearest_if(
        E.point(static_cast<std::size_t>(p)), [&](int id) { return t.cube_of(id, other.level) == other.id; }, need);
    if (hit.first >= 0 && hit.second < need) return false;
  }
  return true;
}

using PartMap = std::map<int, std::vector<int>>;  // catalog member -> sorted ids

void merge_into(PartMap& dst, const PartMap& src) {
  for (const auto& [s, ids] : src) {
    std::vector<int>& d = dst[s];
    std::vector<int> u;
    u.reserve(d.size() + ids.size());
    std::set_union(d.begin(), d.end(), ids.begin(), ids.end(), std::back_inserter(u));
    d.swap(u);
  }
}

struct Piece {
  int cube = -1;  // Q'_j for an inductive piece, -1 for F0
  double length = 0.0;
  PartMap parts;
};

struct Construction {
  PartMap parts;
  std::vector<Piece> pieces;
};

WeightedSet concat(const PartMap& parts, const ApproximantCatalog& cat, double d) {
  const WeightedSet& first = cat.sets.at(static_cast<std::size_t>(parts.begin()->first));
  const int dim = first.dim();
  std::vector<double> coords, weights;
  double r_min = 0.0, r_max = 0.0;
  for (const auto& [s, ids] : parts) {
    const WeightedSet& G = cat.sets[static_cast<std::size_t>(s)];
    for (int id : ids) {
      const double* p = G.point(static_cast<std::size_t>(id));
      coords.insert(coords.end(), p, p + dim);
      weights.push_back(G.weight(static_cast<std::size_t>(id)));
    }
    r_min = std::max(r_min, G.r_min());
    r_max = std::max(r_max, G.r_max());
  }
  return WeightedSet(first.metric(), std::move(coords), std::move(weights), d, r_min, std::max(r_max, r_min));
}

struct Flat {
  WeightedSet all;
  std::vector<WeightedSet> by_member;
  double diam = 0.0;
};

class Engine {
 public:
  Engine(const DyadicTree& t, const CoronaDecomposition& corona, const ApproximantCatalog& cat, const Bp2Options& opts,
         Bp2Certificate& cert)
      : t_(t), corona_(corona), cat_(cat), opts_(opts), cert_(cert), m_(corona_measure(corona)) {
    const std::size_t nc = t.cubes.size();
    reg_ = corona.cube_regime();
    md_.assign(nc, 0.0);
    for (std::size_t i = nc; i-- > 0;) {
      double s = m_.alpha[i];
      for (int ch : t.cubes[i].children) s += md_[static_cast<std::size_t>(ch)];
      md_[i] = s;
    }
    rung_.assign(nc, 0);
    const std::size_t top = cert.ladder.size() - 1;
    for (std::size_t i = 0; i < nc; ++i) {
      const double mu = t.cubes[i].mass;
      std::size_t r = 0;
      while (r < top && md_[i] > cert.ladder[r] * mu * (1.0 + kRoundoff)) ++r;
      rung_[i] = static_cast<int>(r);
    }
    dilations_ = all_dilations(t, corona.K);
    memo_[0].resize(nc);
    memo_[1].resize(nc);
    geo_tol_ = 2.0 * t.space.r_min();
    star_scale_ = t.space.r_max();
    for (const WeightedSet& G : cat.sets) star_scale_ = std::max(star_scale_, G.r_max());
  }

  const Construction& build(int q, bool star) {
    std::optional<Construction>& slot = memo_[star ? 1 : 0][static_cast<std::size_t>(q)];
    if (slot) return *slot;
    CubeCertificate rec;
    rec.cube = q;
    rec.star = star;
    rec.rung = rung_[static_cast<std::size_t>(q)];
    Construction con;
    try {
      con = construct(q, star, rec);
    } catch (const Bp2Failure&) {
      throw;
    } catch (const std::runtime_error& e) {
      // A broken localization clause is a verdict on this cube, not a crash.
      fail(rec, e.what());
      con = Construction{};
      con.pieces.push_back(nearest_member_piece(q, star));
    }
    for (const Piece& p : con.pieces) merge_into(con.parts, p.parts);
    measure(rec, con, star);
    (star ? star_records_ : local_records_).push_back(std::move(rec));
    slot = std::move(con);
    return *slot;
  }

  std::vector<CubeCertificate> take_records() {
    std::sort(star_records_.begin(), star_records_.end(), [](const auto& a, const auto& b) { return a.cube < b.cube; });
    std::sort(local_records_.begin(), local_records_.end(), [](const auto& a, const auto& b) { return a.cube < b.cube; });
    std::vector<CubeCertificate> out = std::move(star_records_);
    for (auto& r : local_records_) out.push_back(std::move(r));
    return out;
  }

  const WeightedSet& star_set(int q) {
    return flat(memo_[1][static_cast<std::size_t>(q)]->parts).all;
  }

 private:
  Construction construct(int q, bool star, CubeCertificate& rec) {
    const Cube& Q = t_.cube(q);
    const int s0 = reg_[static_cast<std::size_t>(q)];
    Construction con;
    const bool bottom = Q.level > t_.k_max - opts_.base_levels;
    if (rec.rung == 0 || bottom) {
      rec.case_label = rec.rung == 0 ? "H0" : "base";
      rec.regime = s0;
      con.pieces.push_back(s0 >= 0 ? regime_piece(q, s0, star) : nearest_member_piece(q, star));
      return con;
    }
    const double a = cert_.ladder[static_cast<std::size_t>(rec.rung - 1)];
    const double b = cert_.b;
    ExtrapolationResult ex;
    try {
      ex = extrapolate(m_, q, a, b);
    } catch (const std::exception& e) {
      fail(rec, std::string("extrapolation: ") + e.what());
      return fallback(q, s0, star, rec);
    }
    rec.family = ex.family;
    const double mu = Q.mass;

    if (ex.family.size() == 1 && ex.family.front() == q) {
      rec.case_label = "case2a";
      for (int ch : Q.children)
        if (md_[static_cast<std::size_t>(ch)] <= a * t_.cube(ch).mass * (1.0 + kRoundoff)) {
          rec.child = ch;
          break;
        }
      if (rec.child < 0) {
        fail(rec, "no child with m(D) <= a mu");
        return fallback(q, s0, star, rec);
      }
      const Construction& sub = build(rec.child, star);
      con.pieces = sub.pieces;
      rec.regime = s0;
      return con;
    }

    int regime = -1;
    try {
      regime = sawtooth_regime(t_, reg_, m_, q, ex.family);
    } catch (const SawtoothRegimeError& e) {
      fail(rec, std::string(e.what()) + " (witness " + std::to_string(e.witness()) + ")");
      return fallback(q, s0, star, rec);
    } catch (const std::invalid_argument& e) {
      fail(rec, e.what());
      return fallback(q, s0, star, rec);
    }
    rec.regime = regime;

    // A = Q0 minus the union of F.
    std::vector<char> in_family(t_.space.size(), 0);
    double family_mass = 0.0;
    for (int f : ex.family) {
      family_mass += t_.cube(f).mass;
      for (int y : t_.cube(f).members) in_family[static_cast<std::size_t>(y)] = 1;
    }
    std::vector<int> leftover;
    double mass_A = 0.0;
    for (int y : Q.members)
      if (!in_family[static_cast<std::size_t>(y)]) {
        leftover.push_back(y);
        mass_A += t_.space.weight(static_cast<std::size_t>(y));
      }
    const double mass_G = family_mass - ex.bad_union_mass;
    const double gamma = 1.0 - (a + b) / (a + 2.0 * b);
    if (mass_A + mass_G < gamma * mu * (1.0 - kMassTol)) fail(rec, "mu(A) + mu(G) below gamma mu(Q0)");

    // Points of A sit on Gamma_S0(Q0) up to the finest scale.
    const LocalizedGraph& local = localized(q, regime);
    const double tol_A = corona_.eta * DyadicTree::length_at(t_.k_max) + geo_tol_;
    for (int y : leftover) {
      if (!chain_in_regime(t_, reg_, y, q)) {
        fail(rec, "point " + std::to_string(y) + " of A leaves the regime");
        break;
      }
      const double dy = local.set.index().nearest(t_.space.point(static_cast<std::size_t>(y))).second;
      rec.lemma_a_ratio = std::max(rec.lemma_a_ratio, dy / tol_A);
    }
    if (rec.lemma_a_ratio > 1.0) fail(rec, "a point of A is far from Gamma_S0(Q0)");

    con.pieces.push_back(regime_piece(q, regime, star));
    if (mass_A > 0.5 * gamma * mu) {
      rec.case_label = "case1";
      return con;
    }

    rec.case_label = "case2b";
    std::vector<int> good;
    std::set_difference(ex.family.begin(), ex.family.end(), ex.bad_subfamily.begin(), ex.bad_subfamily.end(),
                        std::back_inserter(good));
    std::vector<int> candidates;
    for (int g : good)
      for (int ch : t_.cube(g).children)
        if (md_[static_cast<std::size_t>(ch)] <= a * t_.cube(ch).mass * (1.0 + kRoundoff)) candidates.push_back(ch);
    const SeparatedFamily sep = separated_subfamily(t_, candidates, 80.0 * cert_.C0);
    rec.separated = sep.selected;
    if (sep.selected.empty()) fail(rec, "empty separated family in case 2b");
    const WeightedSet& f0 = flat(con.pieces.front().parts).all;
    for (int j : sep.selected) {
      const int grand = t_.cube(t_.cube(j).parent).parent;
      if (grand < 0 || reg_[static_cast<std::size_t>(grand)] != regime) {
        fail(rec, "grandparent of cube " + std::to_string(j) + " is outside the regime");
        continue;
      }
      const double lg = t_.length(grand);
      const double dg = f0.index().nearest(t_.space.point(static_cast<std::size_t>(t_.cube(grand).center))).second;
      if (dg > corona_.eta * lg + geo_tol_)
        fail(rec, "grandparent center of cube " + std::to_string(j) + " is far from F0");
      const Construction& fj = build(j, false);
      con.pieces.push_back(Piece{j, t_.length(j), fj.parts});
    }
    return con;
  }

  Construction fallback(int q, int s0, bool star, CubeCertificate& rec) {
    rec.case_label += rec.case_label.empty() ? "fallback" : "+fallback";
    Construction con;
    con.pieces.push_back(s0 >= 0 ? regime_piece(q, s0, star) : nearest_member_piece(q, star));
    return con;
  }

  const LocalizedGraph& localized(int q, int regime) {
    auto it = localized_.find(q);
    if (it != localized_.end()) return it->second;
    const StoppingRegime& S = corona_.regimes[static_cast<std::size_t>(regime)];
    LocalizeGraphOptions lo;
    lo.tolerance = geo_tol_;
    lo.dilations = &dilations_;
    LocalizedGraph g = localize_graph(cat_.sets[static_cast<std::size_t>(S.approximant)], t_, q, S, cert_.C0,
                                      corona_.eta, corona_.K, lo);
    return localized_.emplace(q, std::move(g)).first->second;
  }

  Piece regime_piece(int q, int regime, bool star) {
    const int s = corona_.regimes[static_cast<std::size_t>(regime)].approximant;
    Piece p;
    if (star) {
      p.parts[s] = all_ids(s);
    } else {
      p.parts[s] = localized(q, regime).ids;
    }
    return p;
  }

  // Bad cubes near the finest level borrow the closest catalog member.
  Piece nearest_member_piece(int q, bool star) {
    const double* xq = t_.space.point(static_cast<std::size_t>(t_.cube(q).center));
    int best = -1;
    double best_d = kInf;
    int anchor = -1;
    for (std::size_t s = 0; s < cat_.size(); ++s) {
      const auto hit = cat_.sets[s].index().nearest(xq);
      if (hit.first >= 0 && hit.second < best_d) {
        best_d = hit.second;
        best = static_cast<int>(s);
        anchor = hit.first;
      }
    }
    Piece p;
    if (star) {
      p.parts[best] = all_ids(best);
    } else {
      const WeightedSet& G = cat_.sets[static_cast<std::size_t>(best)];
      const double r = std::max(cert_.C0 * t_.length(q), G.r_min());
      p.parts[best] = localize(G.with_scale_range(G.r_min(), std::max(G.r_max(), r)), static_cast<std::size_t>(anchor), r).ids;
    }
    return p;
  }

  std::vector<int> all_ids(int s) const {
    std::vector<int> ids(cat_.sets[static_cast<std::size_t>(s)].size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    return ids;
  }

  const Flat& flat(const PartMap& parts) {
    auto it = flats_.find(parts);
    if (it != flats_.end()) return it->second;
    Flat f;
    f.all = concat(parts, cat_, t_.space.d());
    for (const auto& [s, ids] : parts) {
      const WeightedSet& G = cat_.sets[static_cast<std::size_t>(s)];
      f.by_member.push_back(G.subset(ids, G.r_min(), G.r_max()));
    }
    f.diam = diameter(f.all);
    return flats_.emplace(parts, std::move(f)).first->second;
  }

  void measure(CubeCertificate& rec, const Construction& con, bool star) {
    const Cube& Q = t_.cube(rec.cube);
    const double l = t_.length(rec.cube);
    const double d = t_.space.d();
    const Flat& F = flat(con.parts);
    rec.set_size = F.all.size();
    rec.c_diam = F.diam / l;
    if (!(rec.c_diam > 0.0)) fail(rec, "F has zero diameter");

    if (!star) {
      const double* xq = t_.space.point(static_cast<std::size_t>(Q.center));
      double far = 0.0;
      for (std::size_t i = 0; i < F.all.size(); ++i) far = std::max(far, F.all.metric().distance(xq, F.all.point(i)));
      rec.containment_ratio = far / (20.0 * cert_.C0 * l);
      if (far > 20.0 * cert_.C0 * l + geo_tol_) fail(rec, "F leaves B(x_Q0, 20 C0 l(Q0))");
    }

    double on_F = 0.0;
    for (int y : Q.members) {
      if (F.all.index().any_within(t_.space.point(static_cast<std::size_t>(y)), cert_.delta_match, [](int) { return true; }))
        on_F += t_.space.weight(static_cast<std::size_t>(y));
    }
    rec.c_mass = on_F / Q.mass;
    if (!(rec.c_mass > 0.0)) fail(rec, "mu(F ∩ Q0) vanishes");

    // Probe balls centered on F.
    const double top = star ? star_scale_ : cert_.C0 * l;
    const double bottom = std::max(F.all.r_min(), t_.space.r_min());
    const std::vector<double> radii = log_radii(bottom, std::max(top, bottom), opts_.radii_per_octave);
    std::vector<WeightedSet> piece_sets;
    for (const Piece& p : con.pieces) piece_sets.push_back(flat(p.parts).all);

    std::vector<const double*> centers;
    const std::size_t n = F.all.size();
    const std::size_t count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, opts_.probe_centers)));
    for (std::size_t i = 0; i < count; ++i) centers.push_back(F.all.point(i * n / count));
    for (const WeightedSet& ps : piece_sets) centers.push_back(ps.point(ps.size() / 2));

    double max_ratio = 0.0, min_ratio = kInf, min_theta = kInf;
    std::vector<double> shell(radii.size()), member_shell(radii.size());
    std::vector<double> piece_dist(piece_sets.size());
    for (const double* x : centers) {
      std::fill(shell.begin(), shell.end(), 0.0);
      F.all.index().accumulate_shells(x, radii, shell.data());
      std::vector<double> best_member(radii.size(), 0.0);
      for (const WeightedSet& G : F.by_member) {
        std::fill(member_shell.begin(), member_shell.end(), 0.0);
        G.index().accumulate_shells(x, radii, member_shell.data());
        double run = 0.0;
        for (std::size_t j = 0; j < radii.size(); ++j) {
          run += member_shell[j];
          best_member[j] = std::max(best_member[j], run);
        }
      }
      for (std::size_t k = 0; k < piece_sets.size(); ++k) piece_dist[k] = piece_sets[k].index().nearest(x).second;

      double run = 0.0;
      for (std::size_t j = 0; j < radii.size(); ++j) {
        const double r = radii[j];
        const double rd = std::pow(r, d);
        run += shell[j];
        max_ratio = std::max(max_ratio, run / rd);
        min_ratio = std::min(min_ratio, run / rd);
        min_theta = std::min(min_theta, best_member[j] / rd);

        int t1 = 0;
        int owner = -1;
        for (std::size_t k = 0; k < con.pieces.size(); ++k) {
          const Piece& p = con.pieces[k];
          if (owner < 0 && piece_dist[k] == 0.0) owner = static_cast<int>(k);
          if (p.cube >= 0 && p.length > r && piece_dist[k] <= r) ++t1;
        }
        rec.t1_max_terms = std::max(rec.t1_max_terms, t1);
        if (owner < 0 || con.pieces[static_cast<std::size_t>(owner)].cube < 0) {
          ++rec.lower_cases[0];
        } else if (r < (800.0 + corona_.eta) * cert_.C0 * con.pieces[static_cast<std::size_t>(owner)].length) {
          ++rec.lower_cases[1];
        } else {
          ++rec.lower_cases[2];
        }
      }
    }
    rec.C_reg = std::max(max_ratio, min_ratio > 0.0 ? 1.0 / min_ratio : kInf);
    rec.theta = min_theta;
    if (!std::isfinite(rec.C_reg)) fail(rec, "F is not regular on the probes");
    if (!(rec.theta > 0.0)) fail(rec, "F has no big piece on some probe");
    if (rec.case_label == "case2b" && rec.t1_max_terms > 1) fail(rec, "more than one nonzero T1 term");
  }

  void fail(CubeCertificate& rec, const std::string& msg) {
    rec.ok = false;
    rec.failures.push_back(msg);
    const std::string full = "cube " + std::to_string(rec.cube) + (rec.star ? " (global): " : " (local): ") + msg;
    cert_.failures.push_back(full);
    if (opts_.fail_fast) throw Bp2Failure(full, rec.cube);
  }

  const DyadicTree& t_;
  const CoronaDecomposition& corona_;
  const ApproximantCatalog& cat_;
  const Bp2Options& opts_;
  Bp2Certificate& cert_;
  DiscreteMeasure m_;
  std::vector<int> reg_;
  std::vector<double> md_;
  std::vector<int> rung_;
  std::vector<std::vector<int>> dilations_;
  std::vector<std::optional<Construction>> memo_[2];
  std::map<int, LocalizedGraph> localized_;
  std::map<PartMap, Flat> flats_;
  std::vector<CubeCertificate> star_records_, local_records_;
  double geo_tol_ = 0.0;
  double star_scale_ = 0.0;
};

}  // namespace

BPCheckResult bp_check(const DyadicTree& tree, const std::vector<WeightedSet>& catalog, double theta,
                       const std::vector<int>& hints, double delta) {
  if (!(theta >= 0.0)) throw std::invalid_argument("bp_check: theta must be nonnegative");
  if (!hints.empty() && hints.size() != tree.cubes.size())
    throw std::invalid_argument("bp_check: one hint per cube is required");
  const WeightedSet& E = tree.space;
  delta = resolve_delta(E, delta);
  std::vector<std::vector<char>> near(catalog.size());
  auto mass_on = [&](const Cube& q, int s) {
    std::vector<char>& f = near[static_cast<std::size_t>(s)];
    if (f.empty()) f = near_flags(E, catalog[static_cast<std::size_t>(s)], delta);
    double m = 0.0;
    for (int y : q.members)
      if (f[static_cast<std::size_t>(y)]) m += E.weight(static_cast<std::size_t>(y));
    return m;
  };
  BPCheckResult out;
  out.theta = theta;
  out.min_theta = kInf;
  for (const Cube& q : tree.cubes) {
    BPWitness w;
    w.cube = q.id;
    const int hint = hints.empty() ? -1 : hints[static_cast<std::size_t>(q.id)];
    if (hint >= 0 && static_cast<std::size_t>(hint) < catalog.size()) {
      const double m = mass_on(q, hint);
      if (m >= theta * q.mass * (1.0 - kRoundoff)) {
        w.approximant = hint;
        w.intersection_mass = m;
      }
    }
    if (w.approximant < 0) {
      for (std::size_t s = 0; s < catalog.size(); ++s) {
        const double m = mass_on(q, static_cast<int>(s));
        if (w.approximant < 0 || m > w.intersection_mass) {
          w.approximant = static_cast<int>(s);
          w.intersection_mass = m;
        }
      }
    }
    w.theta = w.intersection_mass / q.mass;
    out.min_theta = std::min(out.min_theta, w.theta);
    if (w.theta < theta * (1.0 - kRoundoff) && out.failing_cube < 0) {
      out.ok = false;
      out.failing_cube = q.id;
    }
    out.witnesses.push_back(w);
  }
  if (tree.cubes.empty()) out.min_theta = 0.0;
  return out;
}

BallBPResult bp_ball_check(const WeightedSet& E, const std::vector<WeightedSet>& catalog,
                           const std::vector<int>& centers, const std::vector<double>& radii, double delta) {
  delta = resolve_delta(E, delta);
  std::vector<std::vector<char>> near;
  for (const WeightedSet& G : catalog) near.push_back(near_flags(E, G, delta));
  BallBPResult out;
  out.min_theta = kInf;
  std::vector<double> per(catalog.size());
  for (int c : centers) {
    if (c < 0 || static_cast<std::size_t>(c) >= E.size()) throw std::invalid_argument("bp_ball_check: bad center");
    for (double r : radii) {
      std::fill(per.begin(), per.end(), 0.0);
      E.index().for_each_in_ball(E.point(static_cast<std::size_t>(c)), r, [&](int id, double) {
        for (std::size_t s = 0; s < near.size(); ++s)
          if (near[s][static_cast<std::size_t>(id)]) per[s] += E.weight(static_cast<std::size_t>(id));
      });
      const double best = per.empty() ? 0.0 : *std::max_element(per.begin(), per.end());
      const double th = best / std::pow(r, E.d());
      if (th < out.min_theta) {
        out.min_theta = th;
        out.worst_center = c;
        out.worst_radius = r;
      }
    }
  }
  return out;
}

LocalizedGraph localize_graph(const WeightedSet& approximant, const DyadicTree& tree, int cube,
                              const StoppingRegime& regime, double C0, double eta, double K,
                              const LocalizeGraphOptions& opts) {
  check_cube(tree, cube, "localize_graph");
  if (!std::binary_search(regime.cubes.begin(), regime.cubes.end(), cube))
    throw std::invalid_argument("localize_graph: cube is not in the regime");
  const Cube& q = tree.cube(cube);
  const double l = tree.length(cube);
  const double* xq = tree.space.point(static_cast<std::size_t>(q.center));
  const auto [anchor, gap] = approximant.index().nearest(xq);
  if (anchor < 0 || gap >= eta * l + opts.tolerance)
    throw std::runtime_error("localize_graph: approximant has no point within eta l(Q) of cube " +
                             std::to_string(cube));
  const double r = std::max(C0 * l, approximant.r_min());
  const WeightedSet scaled = approximant.with_scale_range(approximant.r_min(), std::max(approximant.r_max(), r));
  LocalizedSet loc = localize(scaled, static_cast<std::size_t>(anchor), r);

  LocalizedGraph out;
  out.set = loc.set;
  out.ids = std::move(loc.ids);
  out.anchor = anchor;
  out.radius = r;
  for (std::size_t i = 0; i < out.set.size(); ++i)
    if (out.set.metric().distance(xq, out.set.point(i)) > 5.0 * C0 * l + opts.tolerance)
      throw std::runtime_error("localize_graph: localized set leaves B(x_Q, 5 C0 l(Q)) for cube " +
                               std::to_string(cube));
  if (opts.check_still_close) {
    for (int c : regime.cubes) {
      if (!tree.contains(cube, c)) continue;
      const std::vector<int> kq = opts.dilations ? (*opts.dilations)[static_cast<std::size_t>(c)] : dilate(tree, c, K);
      double worst = 0.0;
      for (int x : kq)
        worst = std::max(worst, out.set.index().nearest(tree.space.point(static_cast<std::size_t>(x))).second);
      const double lc = tree.length(c);
      out.still_close_ratio = std::max(out.still_close_ratio, worst / (eta * lc));
      if (worst >= eta * lc + opts.tolerance)
        throw std::runtime_error("localize_graph: localized approximant is not eta-close on K Q' for cube " +
                                 std::to_string(c));
    }
  }
  return out;
}

bool nested_chain_membership(const CoronaDecomposition& corona, int point, int q0) {
  const DyadicTree& t = *corona.tree;
  check_cube(t, q0, "nested_chain_membership");
  if (point < 0 || static_cast<std::size_t>(point) >= t.space.size())
    throw std::invalid_argument("nested_chain_membership: point out of range");
  return chain_in_regime(t, corona.cube_regime(), point, q0);
}

DiscreteMeasure corona_measure(const CoronaDecomposition& corona) {
  const DyadicTree& t = *corona.tree;
  std::vector<double> alpha(t.cubes.size(), 0.0);
  for (int c : corona.maximal_cubes()) alpha[static_cast<std::size_t>(c)] = t.cube(c).mass;
  for (int c : corona.bad) alpha[static_cast<std::size_t>(c)] = t.cube(c).mass;
  return DiscreteMeasure(t, std::move(alpha));
}

int regime_of_sawtooth(const CoronaDecomposition& corona, const DiscreteMeasure& m, int q0,
                       const std::vector<int>& family) {
  if (m.tree != corona.tree) throw std::invalid_argument("regime_of_sawtooth: measure and decomposition differ in tree");
  return sawtooth_regime(*corona.tree, corona.cube_regime(), m, q0, family);
}

SeparatedFamily separated_subfamily(const DyadicTree& tree, const std::vector<int>& cubes, double sep_factor) {
  if (!(sep_factor >= 0.0)) throw std::invalid_argument("separated_subfamily: separation must be nonnegative");
  std::vector<int> order = cubes;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  for (int c : order) check_cube(tree, c, "separated_subfamily");
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return tree.cube(a).level < tree.cube(b).level; });
  SeparatedFamily out;
  for (int c : order) out.input_mass += tree.cube(c).mass;
  for (int c : order) {
    bool keep = true;
    for (int k : out.selected) {
      const double need = sep_factor * std::max(tree.length(c), tree.length(k));
      if (!cubes_apart(tree, c, k, need)) {
        keep = false;
        break;
      }
    }
    if (keep) {
      out.selected.push_back(c);
      out.retained_mass += tree.cube(c).mass;
    }
  }
  std::sort(out.selected.begin(), out.selected.end());
  out.retained_fraction = out.input_mass > 0.0 ? out.retained_mass / out.input_mass : 0.0;
  return out;
}

double default_C0(double eta, double K, double C1) {
  return 1.05 * std::max(2.0 * eta + (2.0 * K - 1.0) * C1, 4.0 * C1);
}

Bp2Certificate corona_to_bp2(const DyadicTree& tree, const CoronaDecomposition& corona,
                             const ApproximantCatalog& catalog, const Bp2Options& opts) {
  if (corona.tree != &tree) throw std::invalid_argument("corona_to_bp2: decomposition belongs to another tree");
  if (catalog.size() == 0) throw std::invalid_argument("corona_to_bp2: empty catalog");
  for (const StoppingRegime& S : corona.regimes)
    if (S.approximant < 0 || static_cast<std::size_t>(S.approximant) >= catalog.size())
      throw std::invalid_argument("corona_to_bp2: regime approximant out of range");

  Bp2Certificate cert;
  cert.eta = corona.eta;
  cert.K = corona.K;
  cert.C1 = tree.C1;
  cert.packing_constant = corona.packing_constant;
  cert.C0 = opts.C0 > 0.0 ? opts.C0 : default_C0(corona.eta, corona.K, tree.C1);
  cert.b = opts.b > 0.0 ? opts.b : 1.0 / (4.0 * kExtrapolationConstant);
  if (kExtrapolationConstant * cert.b > 0.5) throw std::invalid_argument("corona_to_bp2: need C b <= 1/2");
  cert.delta_match = std::max(matching_radius(tree.space), corona.eta * DyadicTree::length_at(tree.k_max));
  const int steps = static_cast<int>(std::ceil(corona.packing_constant / cert.b - kRoundoff));
  for (int i = 0; i <= std::max(steps, 0); ++i) cert.ladder.push_back(i * cert.b);

  Engine engine(tree, corona, catalog, opts, cert);
  for (const Cube& q : tree.cubes) engine.build(q.id, true);
  cert.cubes = engine.take_records();

  cert.rungs.resize(cert.ladder.size());
  for (std::size_t i = 0; i < cert.rungs.size(); ++i) {
    RungConstants& rc = cert.rungs[i];
    rc.a = cert.ladder[i];
    rc.c_diam = kInf;
    rc.theta = kInf;
    rc.c_mass = kInf;
    for (const CubeCertificate& c : cert.cubes) {
      if (static_cast<std::size_t>(c.rung) > i) continue;
      ++rc.cubes;
      rc.c_diam = std::min(rc.c_diam, c.c_diam);
      rc.C_reg = std::max(rc.C_reg, c.C_reg);
      rc.theta = std::min(rc.theta, c.theta);
      rc.c_mass = std::min(rc.c_mass, c.c_mass);
    }
    if (rc.cubes == 0) rc.c_diam = rc.theta = rc.c_mass = 0.0;
  }

  std::vector<WeightedSet> stars;
  std::vector<int> hints;
  double required = kInf;
  for (const Cube& q : tree.cubes) {
    stars.push_back(engine.star_set(q.id));
    hints.push_back(q.id);
  }
  for (const CubeCertificate& c : cert.cubes)
    if (c.star) required = std::min(required, c.c_mass);
  cert.final_check = bp_check(tree, stars, required * (1.0 - kMassTol), hints, cert.delta_match);
  cert.theta_prime = cert.final_check.min_theta;
  cert.ok = cert.failures.empty() && cert.final_check.ok && cert.theta_prime > 0.0;
  return cert;
}

nlohmann::json to_json(const BPCheckResult& r) {
  nlohmann::json w = nlohmann::json::array();
  for (const BPWitness& x : r.witnesses)
    w.push_back({{"cube", x.cube}, {"approximant", x.approximant}, {"mass", x.intersection_mass}, {"theta", x.theta}});
  return {{"ok", r.ok}, {"theta", r.theta}, {"min_theta", r.min_theta}, {"failing_cube", r.failing_cube}, {"witnesses", w}};
}

nlohmann::json to_json(const Bp2Certificate& c) {
  nlohmann::json cubes = nlohmann::json::array();
  for (const CubeCertificate& r : c.cubes) {
    cubes.push_back({{"cube", r.cube},
                     {"global", r.star},
                     {"rung", r.rung},
                     {"case", r.case_label},
                     {"regime", r.regime},
                     {"family", r.family},
                     {"separated", r.separated},
                     {"child", r.child},
                     {"set_size", r.set_size},
                     {"containment_ratio", r.containment_ratio},
                     {"c_diam", r.c_diam},
                     {"C_reg", r.C_reg},
                     {"theta", r.theta},
                     {"c_mass", r.c_mass},
                     {"t1_max_terms", r.t1_max_terms},
                     {"lower_cases", {r.lower_cases[0], r.lower_cases[1], r.lower_cases[2]}},
                     {"lemma_a_ratio", r.lemma_a_ratio},
                     {"ok", r.ok},
                     {"failures", r.failures}});
  }
  nlohmann::json rungs = nlohmann::json::array();
  for (const RungConstants& r : c.rungs)
    rungs.push_back({{"a", r.a}, {"cubes", r.cubes}, {"c_diam", r.c_diam}, {"C_reg", r.C_reg}, {"theta", r.theta},
                     {"c_mass", r.c_mass}});
  nlohmann::json fc = to_json(c.final_check);
  fc.erase("witnesses");
  return {{"ok", c.ok},
          {"C0", c.C0},
          {"b", c.b},
          {"eta", c.eta},
          {"K", c.K},
          {"C1", c.C1},
          {"packing_constant", c.packing_constant},
          {"delta_match", c.delta_match},
          {"ladder", c.ladder},
          {"rungs", rungs},
          {"theta_prime", c.theta_prime},
          {"final_check", fc},
          {"failures", c.failures},
          {"cubes", cubes}};
}

}  // namespace gmt
