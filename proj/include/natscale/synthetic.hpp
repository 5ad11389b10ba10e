#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "natscale/geo.hpp"
#include "natscale/ingest.hpp"

namespace natscale {

struct SyntheticLevel {
  double radius_km = 0.0;
  int cluster_count = 1;
};

/// Hierarchical movement generator parameters. Level 0 is the finest.
struct SyntheticSpec {
  std::vector<SyntheticLevel> levels;  // radii strictly increasing
  std::vector<double> mixing;          // per-level probability of an event, sums to 1
  std::size_t users = 500;
  std::size_t movements_per_user = 10;  // mean number of events per user
  double activity_spread = 0.5;         // per-user event counts span mean * (1 +- spread)
  std::size_t locations = 200;
  LatLon center{50.5, 4.5};
  double region_radius_km = 0.0;        // top-level placement disc; 0 means 2x the largest radius
  std::uint64_t seed = 0;

  /// Throws Error(Config) when the spec is inconsistent.
  void validate() const;
};

struct SyntheticUser {
  std::string user_id;
  int home_cluster = 0;             // level-0 cluster
  std::vector<int> levels_sampled;  // levels that produced at least one event, ascending
  std::size_t events = 0;
};

struct SyntheticData {
  std::vector<MovementEvent> events;
  LocationRegistry locations;
  std::vector<std::vector<int>> location_clusters;  // [location][level] cluster index
  std::vector<std::vector<LatLon>> centers;  // per level
  std::vector<SyntheticUser> users;
};

/// Places cluster centres top-down (each the best of several uniform draws within its
/// parent's radius, keeping same-level clusters evenly spread), seeds the
/// locations inside level-0 clusters, gives every user a home level-0 cluster and samples
/// each event's level from `mixing`, the event falling uniformly inside the user's
/// ancestor cluster disc at that level. Deterministic given `spec.seed`.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Writes events.csv, locations.csv and ground_truth.json into `dir`.
void write_synthetic(const std::filesystem::path& dir, const SyntheticSpec& spec, const SyntheticData& data);

}  // namespace natscale
