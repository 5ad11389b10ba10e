#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "natscale/ingest.hpp"
#include "natscale/partition.hpp"

namespace natscale {

enum class PercentileWeighting {
  ByWeight,  // share of total edge weight (user co-occurrences)
  ByEdge,    // share of edge count
};

std::string to_string(PercentileWeighting w);
PercentileWeighting parse_percentile_weighting(const std::string& name);

/// Distance thresholds m_1..m_100 (km). m_s is the smallest edge distance d such that
/// edges no longer than d carry at least s% of the mass.
struct PercentileTable {
  std::array<double, 100> thresholds{};
  PercentileWeighting weighting = PercentileWeighting::ByWeight;

  double at(ScaleIndex s) const { return thresholds[static_cast<std::size_t>(s.value() - 1)]; }
  /// Smallest scale whose threshold reaches `distance_km`; 100 when beyond m_100.
  ScaleIndex scale_for_distance(double distance_km) const;
};

PercentileTable percentile_table(const WeightedGraph& graph,
                                 PercentileWeighting weighting = PercentileWeighting::ByWeight);

/// G_s: same vertex set, edges with distance <= m_s.
WeightedGraph percentile_graph(const WeightedGraph& graph, const PercentileTable& table, ScaleIndex s);

/// Weighted Newman modularity. Throws when the graph carries no weight.
double modularity(const WeightedGraph& graph, const Partition& partition);

/// `s,threshold_km` CSV; thresholds are written in shortest round-trip form.
void write_percentile_csv(const std::filesystem::path& path, const PercentileTable& table);

}  // namespace natscale
