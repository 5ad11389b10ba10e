#pragma once

#include <cstdint>
#include <filesystem>

#include "natscale/ingest.hpp"
#include "natscale/partition.hpp"

namespace natscale {

/// One run of the two-phase Louvain method (local moving, then aggregation, repeated
/// until a level makes no move). Vertex visit order is reshuffled before every sweep.
/// A vertex only moves when its modularity gain is strictly larger than staying put.
/// Isolated vertices stay singletons. Throws when the graph carries no weight.
Partition louvain(const WeightedGraph& graph, std::uint64_t seed);

/// Best of `runs` Louvain runs seeded seed+1 .. seed+runs; ties keep the earliest run.
Partition best_louvain(const WeightedGraph& graph, int runs, std::uint64_t seed);

/// Largest community count accepted by force_bipartition.
inline constexpr int kMaxBipartitionCommunities = 25;

/// Merges the communities of `partition` into the two groups with the highest
/// modularity, trying all 2^(k-1) - 1 merges. Community 0 always lands in group 0;
/// bit (c - 1) of the group mask puts community c in group 1. Ties go to the smallest
/// mask.
Partition force_bipartition(const WeightedGraph& graph, const Partition& partition);

/// `location_id,community` CSV. `ids` gives the exported id of each location.
void write_partition_csv(const std::filesystem::path& path, const Partition& partition,
                         std::span<const std::int64_t> ids);
Partition read_partition_csv(const std::filesystem::path& path, std::span<const std::int64_t> ids);

}  // namespace natscale
