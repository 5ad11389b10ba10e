#include "natscale/graph.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "natscale/error.hpp"

namespace natscale {

std::string to_string(PercentileWeighting w) {
  return w == PercentileWeighting::ByWeight ? "by_weight" : "by_edge";
}

PercentileWeighting parse_percentile_weighting(const std::string& name) {
  if (name == "by_weight") return PercentileWeighting::ByWeight;
  if (name == "by_edge") return PercentileWeighting::ByEdge;
  throw config_error(fmt::format("unknown percentile mode '{}' (expected by_weight or by_edge)", name));
}

ScaleIndex PercentileTable::scale_for_distance(double distance_km) const {
  auto it = std::lower_bound(thresholds.begin(), thresholds.end(), distance_km);
  if (it == thresholds.end()) return ScaleIndex(100);
  return ScaleIndex(static_cast<int>(it - thresholds.begin()) + 1);
}

PercentileTable percentile_table(const WeightedGraph& graph, PercentileWeighting weighting) {
  if (graph.edges.empty()) throw stage_error("percentile_table", "graph has no edges");

  std::vector<std::size_t> order(graph.edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return graph.edges[a].distance_km < graph.edges[b].distance_km;
  });

  auto mass = [&](const Edge& e) -> std::int64_t {
    return weighting == PercentileWeighting::ByWeight ? e.weight : 1;
  };
  std::int64_t total = 0;
  for (const auto& e : graph.edges) total += mass(e);
  if (total <= 0) throw stage_error("percentile_table", "graph carries no weight");

  // Integer comparison cum * 100 >= s * total avoids rounding at exact percentages.
  PercentileTable table;
  table.weighting = weighting;
  std::int64_t cum = 0;
  std::size_t k = 0;
  for (int s = 1; s <= 100; ++s) {
    while (cum * 100 < static_cast<std::int64_t>(s) * total) cum += mass(graph.edges[order[k++]]);
    table.thresholds[static_cast<std::size_t>(s - 1)] = graph.edges[order[k - 1]].distance_km;
  }
  table.thresholds[99] = graph.edges[order.back()].distance_km;

  assert(std::is_sorted(table.thresholds.begin(), table.thresholds.end()));
  return table;
}

WeightedGraph percentile_graph(const WeightedGraph& graph, const PercentileTable& table, ScaleIndex s) {
  const double limit = table.at(s);
  WeightedGraph out;
  out.n = graph.n;
  out.location_users = graph.location_users;
  for (const auto& e : graph.edges)
    if (e.distance_km <= limit) out.edges.push_back(e);
  return out;
}

double modularity(const WeightedGraph& graph, const Partition& partition) {
  if (partition.size() != graph.n)
    throw stage_error("modularity", fmt::format("partition covers {} of {} vertices", partition.size(), graph.n));
  const auto W = static_cast<double>(graph.total_weight());
  if (!(W > 0.0)) throw stage_error("modularity", "graph has zero total weight");

  const auto k = static_cast<std::size_t>(partition.n_communities);
  std::vector<double> inside(k, 0.0), degree(k, 0.0);
  for (const auto& e : graph.edges) {
    const auto cu = static_cast<std::size_t>(partition.labels[static_cast<std::size_t>(e.u)]);
    const auto cv = static_cast<std::size_t>(partition.labels[static_cast<std::size_t>(e.v)]);
    if (cu >= k || cv >= k) throw stage_error("modularity", "partition label out of range");
    const auto w = static_cast<double>(e.weight);
    if (cu == cv) inside[cu] += w;
    degree[cu] += w;
    degree[cv] += w;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double frac = degree[c] / (2.0 * W);
    q += inside[c] / W - frac * frac;
  }
  return q;
}

void write_percentile_csv(const std::filesystem::path& path, const PercentileTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(fmt::format("cannot write '{}'", path.string()));
  out << "s,threshold_km\n";
  for (int s = 1; s <= 100; ++s) out << fmt::format("{},{}\n", s, table.thresholds[static_cast<std::size_t>(s - 1)]);
}

}  // namespace natscale
