#include "gmt/corona.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gmt/parallel.hpp"

namespace gmt {

ApproximantCatalog ApproximantCatalog::build(std::vector<WeightedSet> sets, const RegularityOptions& opts) {
  if (sets.empty()) throw std::invalid_argument("approximant catalog is empty");
  ApproximantCatalog c;
  c.sets = std::move(sets);
  for (std::size_t i = 0; i < c.sets.size(); ++i) {
    RegularityReport r = regularity_check(c.sets[i], opts);
    if (!r.ok) throw std::invalid_argument("catalog member " + std::to_string(i) + " is not regular: " + r.failure);
    c.uniform_constant = std::max(c.uniform_constant, r.constant_C);
    c.reports.push_back(std::move(r));
  }
  return c;
}

std::vector<int> CoronaDecomposition::maximal_cubes() const {
  std::vector<int> out;
  for (const auto& r : regimes) out.push_back(r.maximal);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> CoronaDecomposition::cube_regime() const {
  std::vector<int> out(tree->cubes.size(), -1);
  for (std::size_t i = 0; i < regimes.size(); ++i)
    for (int c : regimes[i].cubes) out[static_cast<std::size_t>(c)] = static_cast<int>(i);
  return out;
}

CoherenceReport validate_coherence(const StoppingRegime& s, const DyadicTree& t, bool semi_coherent) {
  CoherenceReport rep;
  auto fail = [&](const char* clause, const std::string& msg, int witness) {
    rep.ok = false;
    rep.clause = clause;
    rep.message = msg;
    rep.witness = witness;
    return rep;
  };
  if (s.cubes.empty()) return fail("a", "regime has no cubes", -1);
  for (int c : s.cubes)
    if (c < 0 || static_cast<std::size_t>(c) >= t.cubes.size()) return fail("a", "cube id out of range", c);
  if (!std::binary_search(s.cubes.begin(), s.cubes.end(), s.maximal))
    return fail("a", "maximal cube is not a member", s.maximal);
  for (int c : s.cubes)
    if (!t.contains(s.maximal, c)) return fail("a", "member not below the maximal cube", c);
  for (int c : s.cubes) {
    for (int p = c; p != s.maximal; p = t.cube(p).parent)
      if (!std::binary_search(s.cubes.begin(), s.cubes.end(), p))
        return fail("b", "intermediate cube missing between member and maximal cube", p);
  }
  if (semi_coherent) return rep;
  for (int c : s.cubes) {
    const auto& ch = t.cube(c).children;
    std::size_t in = 0;
    for (int x : ch) in += std::binary_search(s.cubes.begin(), s.cubes.end(), x) ? 1 : 0;
    if (in != 0 && in != ch.size()) return fail("c", "only some children of a member belong to the regime", c);
  }
  return rep;
}

std::vector<std::vector<double>> distance_table(const WeightedSet& set, const ApproximantCatalog& catalog) {
  std::vector<std::vector<double>> out(catalog.size(), std::vector<double>(set.size()));
  for (std::size_t s = 0; s < catalog.size(); ++s) {
    const WeightedSet& g = catalog.sets[s];
    if (g.dim() != set.dim() || !(g.metric() == set.metric()))
      throw std::invalid_argument("catalog member lives in a different space");
    parallel_for(set.size(), [&](std::size_t i) { out[s][i] = g.index().nearest(set.point(i)).second; });
  }
  return out;
}

std::vector<std::vector<int>> all_dilations(const DyadicTree& t, double K) {
  std::vector<std::vector<int>> out(t.cubes.size());
  parallel_for(t.cubes.size(), [&](std::size_t c) { out[c] = dilate(t, static_cast<int>(c), K); });
  return out;
}

double proximity_ratio(const DyadicTree& t, int cube, const std::vector<int>& kq, const std::vector<double>& dist) {
  double worst = 0.0;
  for (int x : kq) worst = std::max(worst, dist[static_cast<std::size_t>(x)]);
  return worst / t.length(cube);
}

CoronaReport validate_corona(const CoronaDecomposition& d, const ApproximantCatalog& catalog, bool semi_coherent) {
  const DyadicTree& t = *d.tree;
  CoronaReport rep;

  std::vector<int> seen(t.cubes.size(), 0);
  for (const auto& s : d.regimes)
    for (int c : s.cubes)
      if (c >= 0 && static_cast<std::size_t>(c) < seen.size()) ++seen[static_cast<std::size_t>(c)];
  for (int c : d.bad)
    if (c >= 0 && static_cast<std::size_t>(c) < seen.size()) ++seen[static_cast<std::size_t>(c)];
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (seen[c] != 1) {
      rep.partition_ok = false;
      rep.messages.push_back("cube " + std::to_string(c) + " appears " + std::to_string(seen[c]) +
                             " times in regimes and bad cubes");
      break;
    }
  }

  for (const auto& s : d.regimes) {
    const CoherenceReport c = validate_coherence(s, t, semi_coherent);
    if (!c.ok) {
      rep.coherence_ok = false;
      rep.messages.push_back("regime " + std::to_string(s.id) + " violates (" + c.clause + ") at cube " +
                             std::to_string(c.witness) + ": " + c.message);
    }
    if (s.approximant < 0 || static_cast<std::size_t>(s.approximant) >= catalog.size()) {
      rep.coherence_ok = false;
      rep.messages.push_back("regime " + std::to_string(s.id) + " references a missing approximant");
    }
    if (t.cube(s.maximal).level == t.k_min) rep.window_boundary.push_back(s.maximal);
  }

  std::vector<int> marked = d.bad;
  for (int m : d.maximal_cubes()) marked.push_back(m);
  std::sort(marked.begin(), marked.end());
  marked.erase(std::unique(marked.begin(), marked.end()), marked.end());
  rep.packing = packing_check(t, marked, d.packing_constant);
  rep.packing_ok = rep.packing.ok;
  if (!rep.packing_ok)
    rep.messages.push_back("packing ratio " + std::to_string(rep.packing.worst_ratio) + " exceeds " +
                           std::to_string(d.packing_constant));

  if (rep.coherence_ok) {
    const auto table = distance_table(t.space, catalog);
    struct Job {
      int cube, approximant;
    };
    std::vector<Job> jobs;
    for (const auto& s : d.regimes)
      for (int c : s.cubes) jobs.push_back({c, s.approximant});
    std::vector<double> ratio(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t i) {
      const std::vector<int> kq = dilate(t, jobs[i].cube, d.K);
      ratio[i] = proximity_ratio(t, jobs[i].cube, kq, table[static_cast<std::size_t>(jobs[i].approximant)]);
    });
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (rep.worst_proximity_cube < 0 || ratio[i] > rep.worst_proximity_ratio) {
        rep.worst_proximity_ratio = ratio[i];
        rep.worst_proximity_cube = jobs[i].cube;
      }
      if (!(ratio[i] < d.eta)) rep.proximity_failures.push_back(jobs[i].cube);
    }
    std::sort(rep.proximity_failures.begin(), rep.proximity_failures.end());
    rep.proximity_ok = rep.proximity_failures.empty();
    if (!rep.proximity_ok)
      rep.messages.push_back(std::to_string(rep.proximity_failures.size()) + " regime cubes miss the eta bound");
  } else {
    rep.proximity_ok = false;
  }
  rep.ok = rep.partition_ok && rep.coherence_ok && rep.packing_ok && rep.proximity_ok;
  return rep;
}

CoronaDecomposition build_corona(const DyadicTree& t, const ApproximantCatalog& catalog, double eta, double K,
                                 const CoronaOptions& opts) {
  if (catalog.size() == 0) throw std::invalid_argument("build_corona: catalog is empty");
  if (!(eta > 0.0)) throw std::invalid_argument("build_corona: eta must be positive");
  if (!(K > 1.0)) throw std::invalid_argument("build_corona: K must exceed 1");
  const auto table = distance_table(t.space, catalog);
  const auto kq = all_dilations(t, K);

  // ratio[c][s] for every cube and member.
  const std::size_t ns = catalog.size();
  std::vector<double> ratio(t.cubes.size() * ns);
  parallel_for(t.cubes.size(), [&](std::size_t c) {
    for (std::size_t s = 0; s < ns; ++s)
      ratio[c * ns + s] = proximity_ratio(t, static_cast<int>(c), kq[c], table[s]);
  });
  auto r = [&](int c, int s) { return ratio[static_cast<std::size_t>(c) * ns + static_cast<std::size_t>(s)]; };

  CoronaDecomposition d;
  d.tree = &t;
  d.eta = eta;
  d.K = K;
  std::deque<int> queue(t.roots().begin(), t.roots().end());
  while (!queue.empty()) {
    const int q = queue.front();
    queue.pop_front();
    int best = 0;
    for (int s = 1; s < static_cast<int>(ns); ++s)
      if (r(q, s) < r(q, best)) best = s;
    if (!(r(q, best) < eta)) {
      d.bad.push_back(q);
      for (int ch : t.cube(q).children) queue.push_back(ch);
      continue;
    }
    StoppingRegime reg;
    reg.id = static_cast<int>(d.regimes.size());
    reg.maximal = q;
    reg.approximant = best;
    std::vector<int> frontier{q};
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const int p = frontier[i];
      reg.cubes.push_back(p);
      const auto& ch = t.cube(p).children;
      const bool all_close = std::all_of(ch.begin(), ch.end(), [&](int c) { return r(c, best) < eta; });
      for (int c : ch) {
        if (all_close) frontier.push_back(c);
        else queue.push_back(c);
      }
    }
    std::sort(reg.cubes.begin(), reg.cubes.end());
    d.regimes.push_back(std::move(reg));
  }
  std::sort(d.bad.begin(), d.bad.end());
  if (d.regimes.empty())
    throw std::runtime_error("build_corona: no catalog member approximates any cube within eta");

  std::vector<int> marked = d.bad;
  for (int m : d.maximal_cubes()) marked.push_back(m);
  const PackingResult p = packing_check(t, marked, opts.packing_cap);
  d.packing_constant = p.worst_ratio;
  if (!p.ok) {
    std::ostringstream msg;
    msg << "build_corona: bad and maximal cubes pack with ratio " << p.worst_ratio << " at cube " << p.witness
        << ", above the cap " << opts.packing_cap;
    throw std::runtime_error(msg.str());
  }
  return d;
}

nlohmann::json to_json(const CoronaDecomposition& d) {
  nlohmann::json regimes = nlohmann::json::array();
  for (const auto& s : d.regimes)
    regimes.push_back({{"id", s.id}, {"maximal", s.maximal}, {"approximant", s.approximant}, {"cubes", s.cubes}});
  return {{"eta", d.eta}, {"K", d.K}, {"packing_constant", d.packing_constant}, {"regimes", regimes}, {"bad", d.bad}};
}

nlohmann::json to_json(const CoronaReport& r) {
  return {{"ok", r.ok},
          {"partition_ok", r.partition_ok},
          {"coherence_ok", r.coherence_ok},
          {"packing_ok", r.packing_ok},
          {"proximity_ok", r.proximity_ok},
          {"packing", to_json(r.packing)},
          {"worst_proximity_ratio", r.worst_proximity_ratio},
          {"worst_proximity_cube", r.worst_proximity_cube},
          {"proximity_failures", r.proximity_failures},
          {"window_boundary", r.window_boundary},
          {"messages", r.messages}};
}

CoronaDecomposition corona_from_json(const DyadicTree& tree, const nlohmann::json& j) {
  CoronaDecomposition d;
  d.tree = &tree;
  try {
    d.eta = j.at("eta").get<double>();
    d.K = j.at("K").get<double>();
    d.packing_constant = j.at("packing_constant").get<double>();
    for (const auto& r : j.at("regimes")) {
      StoppingRegime s;
      s.id = r.at("id").get<int>();
      s.maximal = r.at("maximal").get<int>();
      s.approximant = r.at("approximant").get<int>();
      s.cubes = r.at("cubes").get<std::vector<int>>();
      std::sort(s.cubes.begin(), s.cubes.end());
      d.regimes.push_back(std::move(s));
    }
    d.bad = j.at("bad").get<std::vector<int>>();
    std::sort(d.bad.begin(), d.bad.end());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed corona file: ") + e.what());
  }
  return d;
}

}  // namespace gmt
