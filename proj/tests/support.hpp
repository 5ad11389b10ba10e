// Shared fixtures and brute-force oracles for the test suites.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "natscale/community.hpp"
#include "natscale/geometry.hpp"
#include "natscale/graph.hpp"
#include "natscale/ingest.hpp"
#include "natscale/partition.hpp"
#include "natscale/random.hpp"
#include "natscale/scalespace.hpp"

namespace natscale::testing {

struct WeightedPair {
  int u;
  int v;
  std::int64_t w = 1;
  double d = 1.0;
};

inline WeightedGraph make_graph(std::size_t n, const std::vector<WeightedPair>& pairs) {
  WeightedGraph g;
  g.n = n;
  for (const auto& p : pairs) {
    const auto [a, b] = std::minmax(p.u, p.v);
    g.edges.push_back({a, b, p.w, p.d});
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.u, x.v) < std::tie(y.u, y.v);
  });
  return g;
}

/// Erdos-Renyi graph with integer weights in [1, max_weight] and distances in (0, 100).
inline WeightedGraph random_graph(Rng& rng, std::size_t n, double p, std::int64_t max_weight = 5) {
  std::vector<WeightedPair> pairs;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (uniform01(rng) < p)
        pairs.push_back({static_cast<int>(u), static_cast<int>(v),
                         1 + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(max_weight))),
                         uniform(rng, 0.1, 100.0)});
  return make_graph(n, pairs);
}

/// Planted partition: `blocks` equal blocks, edge probability p_in inside, p_out across.
inline WeightedGraph planted_graph(Rng& rng, std::size_t n, std::size_t blocks, double p_in, double p_out,
                                   std::vector<Label>& truth) {
  truth.resize(n);
  for (std::size_t i = 0; i < n; ++i) truth[i] = static_cast<Label>(i * blocks / n);
  std::vector<WeightedPair> pairs;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (uniform01(rng) < (truth[u] == truth[v] ? p_in : p_out))
        pairs.push_back({static_cast<int>(u), static_cast<int>(v)});
  return make_graph(n, pairs);
}

inline std::vector<Label> random_labels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<Label> labels(n);
  for (auto& l : labels) l = static_cast<Label>(uniform_index(rng, k));
  return labels;
}

/// Q = (1/2W) sum_ij [A_ij - k_i k_j / 2W] [c_i == c_j], summed over all ordered pairs.
inline double modularity_oracle(const WeightedGraph& g, const std::vector<Label>& labels) {
  std::vector<std::vector<double>> a(g.n, std::vector<double>(g.n, 0.0));
  for (const auto& e : g.edges) {
    a[static_cast<std::size_t>(e.u)][static_cast<std::size_t>(e.v)] += static_cast<double>(e.weight);
    a[static_cast<std::size_t>(e.v)][static_cast<std::size_t>(e.u)] += static_cast<double>(e.weight);
  }
  std::vector<double> k(g.n, 0.0);
  double two_w = 0.0;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j) {
      k[i] += a[i][j];
      two_w += a[i][j];
    }
  double q = 0.0;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j)
      if (labels[i] == labels[j]) q += a[i][j] - k[i] * k[j] / two_w;
  return q / two_w;
}

/// Fraction of unordered pairs on which the two labelings agree (together or apart).
inline double rand_oracle(const std::vector<Label>& p, const std::vector<Label>& q) {
  std::int64_t agree = 0;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      ++total;
      if ((p[i] == p[j]) == (q[i] == q[j])) ++agree;
    }
  return static_cast<double>(agree) / static_cast<double>(total);
}

/// Calls `fn` with every set partition of {0..n-1} as a restricted growth string.
inline void for_each_set_partition(std::size_t n, const std::function<void(const std::vector<Label>&)>& fn) {
  std::vector<Label> a(n, 0);
  std::function<void(std::size_t, Label)> extend = [&](std::size_t i, Label used) {
    if (i == n) {
      fn(a);
      return;
    }
    for (Label l = 0; l <= used; ++l) {
      a[i] = l;
      extend(i + 1, std::max(used, static_cast<Label>(l + 1)));
    }
  };
  if (n == 0) return;
  extend(1, 1);
}

/// Best modularity over every bipartition of the communities of `p` (brute force).
inline double best_bipartition_q(const WeightedGraph& g, const Partition& p) {
  const int k = p.n_communities;
  double best = -1.0;
  for (std::uint32_t mask = 1; mask + 1 < (1u << k); ++mask) {
    std::vector<Label> labels(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) labels[i] = (mask >> p.labels[i]) & 1u;
    best = std::max(best, modularity_oracle(g, labels));
  }
  return best;
}

/// Registry of seeds given in km around (0, 0) on the equator.
inline LocationRegistry plane_registry(const std::vector<Point2>& points) {
  const Equirectangular projection(LatLon{0.0, 0.0});
  std::vector<Location> locations;
  for (std::size_t i = 0; i < points.size(); ++i)
    locations.push_back({projection.unproject(points[i]), "s" + std::to_string(i), static_cast<std::int64_t>(i)});
  return LocationRegistry(std::move(locations));
}

inline LocationRegistry random_plane_registry(Rng& rng, std::size_t n, double extent_km) {
  std::vector<Point2> points(n);
  for (auto& p : points) p = {uniform(rng, 0.0, extent_km), uniform(rng, 0.0, extent_km)};
  return plane_registry(points);
}

/// Cells whose neighbourhood (self plus Voronoi neighbours) holds a strict majority
/// value different from their own. Empty at a smoothing fixpoint.
template <typename Value>
std::vector<LocationId> cells_with_differing_majority(const std::vector<Value>& values, const VoronoiDiagram& diagram) {
  std::vector<LocationId> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto id = static_cast<LocationId>(i);
    std::map<Value, std::size_t> counts;
    ++counts[values[i]];
    for (const auto nb : diagram.neighbors(id)) ++counts[values[static_cast<std::size_t>(nb)]];
    const std::size_t size = diagram.neighbors(id).size() + 1;
    for (const auto& [value, count] : counts)
      if (2 * count > size && value != values[i]) out.push_back(id);
  }
  return out;
}

/// Similarity matrix whose scales fall in blocks closing at `block_ends` (last = n).
/// Within-block entries are drawn from [in_lo, in_hi], cross-block ones from
/// [out_lo, out_hi]; the diagonal is 1.
inline SimilarityMatrix block_matrix(Rng& rng, int n, const std::vector<int>& block_ends, double in_lo,
                                     double in_hi, double out_lo, double out_hi) {
  std::vector<int> block(static_cast<std::size_t>(n));
  for (int s = 0, b = 0; s < n; ++s) {
    if (s >= block_ends[static_cast<std::size_t>(b)]) ++b;
    block[static_cast<std::size_t>(s)] = b;
  }
  SimilarityMatrix m;
  m.n = static_cast<std::size_t>(n);
  m.values.assign(m.n * m.n, 1.0);
  for (int s = 1; s <= n; ++s)
    for (int t = s + 1; t <= n; ++t) {
      const bool same = block[static_cast<std::size_t>(s - 1)] == block[static_cast<std::size_t>(t - 1)];
      const double v = same ? uniform(rng, in_lo, in_hi) : uniform(rng, out_lo, out_hi);
      m(s, t) = v;
      m(t, s) = v;
    }
  return m;
}

/// Separation with size-weighted mean interval similarity over the largest similarity
/// across any cut. Direct sums, no prefix tables.
inline double sigma_oracle(const SimilarityMatrix& m, const std::vector<int>& breakpoints) {
  const int n = static_cast<int>(m.n);
  double numerator = 0.0;
  double denominator = 0.0;
  int lo = 1;
  for (std::size_t k = 0; k <= breakpoints.size(); ++k) {
    const int hi = k < breakpoints.size() ? breakpoints[k] : n;
    double within = 0.0;
    for (int s = lo; s <= hi; ++s)
      for (int t = lo; t <= hi; ++t) within += m(s, t);
    const double size = hi - lo + 1;
    numerator += size * (within / (size * size));
    if (k < breakpoints.size()) denominator = std::max(denominator, m(hi, hi + 1));
    lo = hi + 1;
  }
  return denominator > 0.0 ? numerator / denominator : std::numeric_limits<double>::infinity();
}

/// Highest-separation breakpoint set among all valid sets of 1..max_size cuts.
inline std::vector<int> exhaustive_breakpoints(const SimilarityMatrix& m, int min_interval, int max_size) {
  const int n = static_cast<int>(m.n);
  // square[lo][hi]: sum over s, t in [lo, hi], grown one row and column at a time.
  std::vector<std::vector<double>> square(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
  for (int lo = 1; lo <= n; ++lo) {
    double acc = 0.0;
    for (int hi = lo; hi <= n; ++hi) {
      for (int t = lo; t < hi; ++t) acc += 2.0 * m(hi, t);
      acc += m(hi, hi);
      square[static_cast<std::size_t>(lo)][static_cast<std::size_t>(hi)] = acc;
    }
  }
  auto sigma_of = [&](const std::vector<int>& cuts) {
    double numerator = 0.0;
    double denominator = 0.0;
    int lo = 1;
    for (std::size_t k = 0; k <= cuts.size(); ++k) {
      const int hi = k < cuts.size() ? cuts[k] : n;
      numerator += square[static_cast<std::size_t>(lo)][static_cast<std::size_t>(hi)] / (hi - lo + 1);
      if (k < cuts.size()) denominator = std::max(denominator, m(hi, hi + 1));
      lo = hi + 1;
    }
    return denominator > 0.0 ? numerator / denominator : std::numeric_limits<double>::infinity();
  };
  std::vector<int> best;
  double best_sigma = -1.0;
  std::vector<int> current;
  std::function<void(int)> extend = [&](int from) {
    if (!current.empty() && n - current.back() >= min_interval) {
      const double sigma = sigma_of(current);
      if (sigma > best_sigma) {
        best_sigma = sigma;
        best = current;
      }
    }
    if (static_cast<int>(current.size()) == max_size) return;
    for (int b = from; b <= n - min_interval; ++b) {
      current.push_back(b);
      extend(b + min_interval);
      current.pop_back();
    }
  };
  extend(min_interval);
  return best;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("natscale_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace natscale::testing
