#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "natscale/geo.hpp"

namespace natscale {

using LocationId = std::int32_t;

/// One geotagged observation as read from an events file.
struct MovementEvent {
  std::string user_id;
  LatLon position;
  std::int64_t timestamp = 0;  // seconds since epoch

  friend bool operator==(const MovementEvent&, const MovementEvent&) = default;
};

struct Location {
  LatLon position;
  std::string name;
  std::int64_t source_id = 0;  // id as given in the input file
};

/// The fixed seed set V. Location ids are dense indices into the registry.
class LocationRegistry {
 public:
  LocationRegistry() = default;

  /// Validates coordinate bounds and coordinate uniqueness. Throws Error(Input).
  explicit LocationRegistry(std::vector<Location> locations);

  std::size_t size() const { return locations_.size(); }
  bool empty() const { return locations_.empty(); }
  const Location& operator[](LocationId id) const { return locations_[static_cast<std::size_t>(id)]; }
  const LatLon& position(LocationId id) const { return (*this)[id].position; }
  std::span<const Location> locations() const { return locations_; }

  /// Registry of the given ids, re-indexed densely in the given order.
  LocationRegistry restrict(std::span<const LocationId> ids) const;

 private:
  std::vector<Location> locations_;
};

struct Edge {
  LocationId u = 0;  // u < v
  LocationId v = 0;
  std::int64_t weight = 0;  // number of distinct users seen at both ends
  double distance_km = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected co-location graph. Edges are stored once in canonical (u < v) form,
/// sorted by (u, v).
struct WeightedGraph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  /// Number of distinct users assigned to each location. May be empty for graphs
  /// that were not built from assignments.
  std::vector<std::int64_t> location_users;

  std::int64_t total_weight() const;
};

struct RejectionReport {
  std::size_t rows = 0;      // data rows examined (blank lines excluded)
  std::size_t rejected = 0;
  std::vector<std::size_t> sample_lines;  // first 10 rejected line numbers, 1-based

  static constexpr std::size_t kMaxSamples = 10;
  void reject(std::size_t line);
};

enum class EventFormat { Csv, Jsonl };

EventFormat parse_event_format(const std::string& name);
/// Guesses the format from the file extension (.jsonl/.ndjson/.json -> jsonl).
EventFormat event_format_for(const std::filesystem::path& path);

struct LoadedEvents {
  std::vector<MovementEvent> events;
  RejectionReport rejections;
};

/// Reads an events file. Malformed rows are reported, not silently dropped; when more
/// than half the rows are malformed the file is rejected as a format mismatch.
LoadedEvents load_events(const std::filesystem::path& path, EventFormat format);

/// Reads a `location_id,lat,lon,name` CSV. Ids must be unique; they are kept as
/// source ids and the registry is ordered by them.
LocationRegistry load_locations(const std::filesystem::path& path);
void write_locations(const std::filesystem::path& path, const LocationRegistry& registry);

struct Assignment {
  std::string user_id;
  LocationId location = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Index of the registry location nearest (great-circle) to `p`; ties go to the lowest id.
LocationId nearest_location(const LocationRegistry& registry, const LatLon& p);

/// Maps every event to its nearest seed and drops repeated (user, location, timestamp)
/// triples, keeping the first occurrence.
std::vector<Assignment> assign_events(std::span<const MovementEvent> events,
                                      const LocationRegistry& registry);

/// Co-location graph: weight(u, v) is the number of distinct users with at least one
/// assignment at u and one at v.
WeightedGraph build_graph(std::span<const Assignment> assignments,
                          const LocationRegistry& registry);

enum class DegreeMode {
  DistinctUsers,  // users assigned to the location
  GraphDegree,    // number of incident edges
};

struct FilteredGraph {
  WeightedGraph graph;
  LocationRegistry registry;
  std::vector<LocationId> kept;  // new id -> id in the unfiltered registry
};

/// Drops locations whose activity is below `min_users` (single pass) and re-indexes.
/// Throws a stage error when fewer than 3 locations survive.
FilteredGraph filter_min_degree(const WeightedGraph& graph, const LocationRegistry& registry,
                                std::int64_t min_users,
                                DegreeMode mode = DegreeMode::DistinctUsers);

}  // namespace natscale
