#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gmt/space.hpp"

namespace gmt {

// Point-cloud generators. Samples are regular grids in the parameter domain [0, length)^d,
// listed in lexicographic order, with weights equal to the surface element of each grid cell.
// Scale ranges default to (2 * max neighbor spacing, length).

struct SampleSpec {
  double length = 1.0;
  double spacing = 1.0 / 256;
  double r_min = 0.0;  // 0 selects the default
  double r_max = 0.0;
};

// The d-plane [0, length)^d x {offset} inside R^n (offset on coordinate d, when d < n).
WeightedSet flat_cloud(int n, int d, const SampleSpec& spec, double offset = 0.0);

// Graph u -> (u, lambda * g(u)) over [0, length)^d in R^{d+1}, g a seeded random
// trigonometric sum with Lipschitz constant exactly 1 bounded above.
WeightedSet lipschitz_graph(int d, double lambda, const SampleSpec& spec, std::uint64_t seed);

// Two parallel copies of the d-plane at distance gap along coordinate d.
WeightedSet two_planes(int n, int d, const SampleSpec& spec, double gap);

// Triangle-wave graph in R^2 with slopes +-lambda and the given number of linear facets.
WeightedSet staircase(double lambda, int facets, const SampleSpec& spec);

// The straight lines extending each facet of staircase(lambda, facets, spec), sampled over
// [-margin, length + margin). Used as a small-constant graph catalog.
std::vector<WeightedSet> staircase_facet_lines(double lambda, int facets, const SampleSpec& spec, double margin);

// Flat line in R^2 carrying `teeth` evenly spaced tents of slope +-slope and the given half-width.
WeightedSet tent_comb(int teeth, double half_width, double slope, const SampleSpec& spec);
// Catalog for tent_comb: the base line followed by the two facet lines of each tent.
std::vector<WeightedSet> tent_comb_lines(int teeth, double half_width, double slope, const SampleSpec& spec,
                                         double margin);
// Parabolic graph {(x, psi(x, t), t)} in R^{n+1} over a grid of [0, length)^{n-1} x [0, time_length)
// with time step spacing^2; weights spacing^{n-1} * spacing^2, d = n + 1.
WeightedSet parabolic_graph_cloud(int n, const std::function<double(const double*, double)>& psi,
                                  const SampleSpec& spec, double time_length);

// Parabolic plane x_2 = slope (x_1 - x0) in R^2 x R over x_1 in [-margin, length + margin) and
// t in [-margin^2, time_length + margin^2), sampled like parabolic_graph_cloud with n = 2.
WeightedSet parabolic_plane_patch(double slope, double x0, const SampleSpec& spec, double time_length, double margin);

// Generic cloud from explicit coordinates with unit-cell weights; scale range as given.
WeightedSet make_cloud(const Metric& metric, std::vector<double> coords, double weight, double d, double r_min,
                       double r_max);

}  // namespace gmt
