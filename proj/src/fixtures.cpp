#include "gmt/fixtures.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace gmt {

namespace {

int steps(double length, double spacing) {
  if (!(spacing > 0.0) || !(length > 0.0)) throw std::invalid_argument("sample length and spacing must be positive");
  const long m = std::lround(length / spacing);
  if (m < 1 || m > 10'000'000) throw std::invalid_argument("sample grid size out of range");
  return static_cast<int>(m);
}

// Applies the default scale range: r_min twice the largest neighbor spacing, r_max the sample length.
WeightedSet finish(const Metric& metric, std::vector<double> coords, std::vector<double> weights, double d,
                   const SampleSpec& spec) {
  const double r_max = spec.r_max > 0.0 ? spec.r_max : spec.length;
  const double provisional_min = spec.r_min > 0.0 ? spec.r_min : std::min(spec.spacing, 0.5 * r_max);
  WeightedSet set(metric, std::move(coords), std::move(weights), d, provisional_min, r_max);
  if (spec.r_min > 0.0) return set;
  double nn = max_nn_distance(set);
  if (!std::isfinite(nn)) nn = spec.spacing;
  return set.with_scale_range(2.0 * nn, std::max(r_max, 4.0 * nn));
}

// Enumerates the grid i * h, i in [0, m)^d, lexicographically (last coordinate fastest).
template <class F>
void for_grid(int d, int m, double h, F&& f) {
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  std::vector<double> u(static_cast<std::size_t>(d), 0.0);
  while (true) {
    for (int c = 0; c < d; ++c) u[static_cast<std::size_t>(c)] = idx[static_cast<std::size_t>(c)] * h;
    f(u);
    int c = d - 1;
    while (c >= 0 && idx[static_cast<std::size_t>(c)] == m - 1) idx[static_cast<std::size_t>(c--)] = 0;
    if (c < 0) break;
    ++idx[static_cast<std::size_t>(c)];
  }
}

}  // namespace

WeightedSet flat_cloud(int n, int d, const SampleSpec& spec, double offset) {
  if (d < 1 || d > n) throw std::invalid_argument("flat_cloud: need 1 <= d <= n");
  const int m = steps(spec.length, spec.spacing);
  std::vector<double> coords, weights;
  const double w = std::pow(spec.spacing, d);
  for_grid(d, m, spec.spacing, [&](const std::vector<double>& u) {
    for (int c = 0; c < n; ++c) coords.push_back(c < d ? u[static_cast<std::size_t>(c)] : (c == d ? offset : 0.0));
    weights.push_back(w);
  });
  return finish(Metric::euclidean(n), std::move(coords), std::move(weights), d, spec);
}

WeightedSet lipschitz_graph(int d, double lambda, const SampleSpec& spec, std::uint64_t seed) {
  if (d < 1 || d > 3) throw std::invalid_argument("lipschitz_graph: d must be 1, 2 or 3");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lipschitz_graph: lambda must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int kTerms = 6;
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::vector<double>> freq(kTerms, std::vector<double>(static_cast<std::size_t>(d)));
  std::vector<double> amp(kTerms), phase(kTerms);
  double slope = 0.0;
  for (int j = 0; j < kTerms; ++j) {
    const double mag = two_pi / spec.length * (1.0 + 7.0 * unit(rng));
    std::vector<double> dir(static_cast<std::size_t>(d));
    double norm = 0.0;
    for (auto& v : dir) {
      v = unit(rng) - 0.5;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (int c = 0; c < d; ++c)
      freq[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = mag * (norm > 0 ? dir[static_cast<std::size_t>(c)] / norm : 1.0);
    amp[static_cast<std::size_t>(j)] = (0.5 + unit(rng)) / mag;
    phase[static_cast<std::size_t>(j)] = two_pi * unit(rng);
    slope += amp[static_cast<std::size_t>(j)] * mag;
  }
  for (auto& a : amp) a /= slope;  // sum of amp * |freq| = 1 bounds |grad g| by 1

  const int m = steps(spec.length, spec.spacing);
  std::vector<double> coords, weights;
  const double cell = std::pow(spec.spacing, d);
  for_grid(d, m, spec.spacing, [&](const std::vector<double>& u) {
    double g = 0.0;
    std::vector<double> grad(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < kTerms; ++j) {
      double arg = phase[static_cast<std::size_t>(j)];
      for (int c = 0; c < d; ++c) arg += freq[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] * u[static_cast<std::size_t>(c)];
      g += amp[static_cast<std::size_t>(j)] * std::sin(arg);
      for (int c = 0; c < d; ++c)
        grad[static_cast<std::size_t>(c)] += amp[static_cast<std::size_t>(j)] * freq[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] * std::cos(arg);
    }
    double g2 = 0.0;
    for (double v : grad) g2 += v * v;
    coords.insert(coords.end(), u.begin(), u.end());
    coords.push_back(lambda * g);
    weights.push_back(cell * std::sqrt(1.0 + lambda * lambda * g2));
  });
  return finish(Metric::euclidean(d + 1), std::move(coords), std::move(weights), d, spec);
}

WeightedSet two_planes(int n, int d, const SampleSpec& spec, double gap) {
  if (d >= n) throw std::invalid_argument("two_planes: need d < n");
  const WeightedSet a = flat_cloud(n, d, spec, 0.0);
  const WeightedSet b = flat_cloud(n, d, spec, gap);
  std::vector<double> coords = a.coords();
  coords.insert(coords.end(), b.coords().begin(), b.coords().end());
  std::vector<double> weights = a.weights();
  weights.insert(weights.end(), b.weights().begin(), b.weights().end());
  SampleSpec s = spec;
  if (s.r_min <= 0.0) s.r_min = a.r_min();
  if (s.r_max <= 0.0) s.r_max = std::max(spec.length, gap);
  return finish(Metric::euclidean(n), std::move(coords), std::move(weights), d, s);
}

namespace {

double triangle_wave(double x, double facet_len) {
  const double k = std::floor(x / facet_len);
  const double r = x - k * facet_len;
  const bool rising = static_cast<long>(k) % 2 == 0;
  return rising ? r : facet_len - r;
}

}  // namespace

WeightedSet staircase(double lambda, int facets, const SampleSpec& spec) {
  if (facets < 1) throw std::invalid_argument("staircase: need at least one facet");
  const int m = steps(spec.length, spec.spacing);
  const double facet_len = spec.length / facets;
  std::vector<double> coords, weights;
  const double w = spec.spacing * std::sqrt(1.0 + lambda * lambda);
  for (int i = 0; i < m; ++i) {
    const double x = i * spec.spacing;
    coords.push_back(x);
    coords.push_back(lambda * triangle_wave(x, facet_len));
    weights.push_back(w);
  }
  return finish(Metric::euclidean(2), std::move(coords), std::move(weights), 1.0, spec);
}

std::vector<WeightedSet> staircase_facet_lines(double lambda, int facets, const SampleSpec& spec, double margin) {
  std::vector<WeightedSet> out;
  const double facet_len = spec.length / facets;
  const int m = steps(spec.length + 2.0 * margin, spec.spacing);
  const double w = spec.spacing * std::sqrt(1.0 + lambda * lambda);
  for (int f = 0; f < facets; ++f) {
    const double x0 = f * facet_len;
    const bool rising = f % 2 == 0;
    const double y0 = lambda * (rising ? 0.0 : facet_len);
    std::vector<double> coords, weights;
    for (int i = 0; i < m; ++i) {
      const double x = -margin + i * spec.spacing;
      coords.push_back(x);
      coords.push_back(y0 + (rising ? lambda : -lambda) * (x - x0));
      weights.push_back(w);
    }
    SampleSpec s = spec;
    s.length = spec.length + 2.0 * margin;
    out.push_back(finish(Metric::euclidean(2), std::move(coords), std::move(weights), 1.0, s));
  }
  return out;
}

namespace {

// Height of the comb at x: tents of the given half-width centered at (j + 1/2) * period.
double comb_height(double x, double period, double half_width, double slope, double* grad) {
  const double c = (std::floor(x / period) + 0.5) * period;
  const double u = std::abs(x - c);
  if (u >= half_width) {
    *grad = 0.0;
    return 0.0;
  }
  *grad = slope;
  return slope * (half_width - u);
}

}  // namespace

WeightedSet tent_comb(int teeth, double half_width, double slope, const SampleSpec& spec) {
  if (teeth < 1) throw std::invalid_argument("tent_comb: need at least one tooth");
  const double period = spec.length / teeth;
  if (!(half_width > 0.0) || 2.0 * half_width > period) throw std::invalid_argument("tent_comb: teeth overlap");
  const int m = steps(spec.length, spec.spacing);
  std::vector<double> coords, weights;
  for (int i = 0; i < m; ++i) {
    const double x = i * spec.spacing;
    double g = 0.0;
    coords.push_back(x);
    coords.push_back(comb_height(x, period, half_width, slope, &g));
    weights.push_back(spec.spacing * std::sqrt(1.0 + g * g));
  }
  return finish(Metric::euclidean(2), std::move(coords), std::move(weights), 1.0, spec);
}

std::vector<WeightedSet> tent_comb_lines(int teeth, double half_width, double slope, const SampleSpec& spec,
                                         double margin) {
  const double period = spec.length / teeth;
  const int m = steps(spec.length + 2.0 * margin, spec.spacing);
  SampleSpec s = spec;
  s.length = spec.length + 2.0 * margin;
  auto line = [&](double x0, double y0, double g) {
    std::vector<double> coords, weights;
    for (int i = 0; i < m; ++i) {
      const double x = -margin + i * spec.spacing;
      coords.push_back(x);
      coords.push_back(y0 + g * (x - x0));
      weights.push_back(spec.spacing * std::sqrt(1.0 + g * g));
    }
    return finish(Metric::euclidean(2), std::move(coords), std::move(weights), 1.0, s);
  };
  std::vector<WeightedSet> out{line(0.0, 0.0, 0.0)};
  for (int j = 0; j < teeth; ++j) {
    const double c = (j + 0.5) * period;
    out.push_back(line(c - half_width, 0.0, slope));
    out.push_back(line(c + half_width, 0.0, -slope));
  }
  return out;
}

WeightedSet parabolic_graph_cloud(int n, const std::function<double(const double*, double)>& psi,
                                  const SampleSpec& spec, double time_length) {
  if (n < 1) throw std::invalid_argument("parabolic graph needs n >= 1");
  const double h = spec.spacing;
  const double dt = h * h;
  const int mx = n > 1 ? steps(spec.length, h) : 1;
  const int mt = steps(time_length, dt);
  const int base = n - 1;
  std::vector<double> coords, weights;
  const double w = std::pow(h, base) * dt;
  std::vector<double> x(static_cast<std::size_t>(std::max(base, 1)), 0.0);
  auto emit = [&](const std::vector<double>& u) {
    for (int c = 0; c < base; ++c) x[static_cast<std::size_t>(c)] = u[static_cast<std::size_t>(c)];
    for (int j = 0; j < mt; ++j) {
      const double t = j * dt;
      coords.insert(coords.end(), x.begin(), x.begin() + base);
      coords.push_back(psi(x.data(), t));
      coords.push_back(t);
      weights.push_back(w);
    }
  };
  if (base == 0) emit({});
  else for_grid(base, mx, h, emit);
  SampleSpec s = spec;
  if (s.r_max <= 0.0) s.r_max = std::max(spec.length, std::sqrt(time_length));
  return finish(Metric::parabolic(n), std::move(coords), std::move(weights), n + 1, s);
}

WeightedSet parabolic_plane_patch(double slope, double x0, const SampleSpec& spec, double time_length, double margin) {
  const double h = spec.spacing;
  const double dt = h * h;
  const int mx = steps(spec.length + 2.0 * margin, h);
  const int mt = steps(time_length + 2.0 * margin * margin, dt);
  std::vector<double> coords, weights;
  for (int i = 0; i < mx; ++i)
    for (int j = 0; j < mt; ++j) {
      const double x = -margin + i * h;
      coords.insert(coords.end(), {x, slope * (x - x0), -margin * margin + j * dt});
      weights.push_back(h * dt);
    }
  SampleSpec s = spec;
  s.length = spec.length + 2.0 * margin;
  if (s.r_max <= 0.0) s.r_max = std::max(s.length, std::sqrt(time_length + 2.0 * margin * margin));
  return finish(Metric::parabolic(2), std::move(coords), std::move(weights), 3.0, s);
}

WeightedSet make_cloud(const Metric& metric, std::vector<double> coords, double weight, double d, double r_min,
                       double r_max) {
  const std::size_t count = coords.size() / static_cast<std::size_t>(metric.dim());
  return WeightedSet(metric, std::move(coords), std::vector<double>(count, weight), d, r_min, r_max);
}

}  // namespace gmt
