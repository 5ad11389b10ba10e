#include "natscale/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include "json.hpp"

#include "natscale/error.hpp"
#include "text.hpp"

namespace natscale {

namespace {

bool valid_latlon(double lat, double lon) {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
         lon >= -180.0 && lon <= 180.0;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error(fmt::format("cannot read '{}'", path.string()));
  return in;
}

struct ColumnMap {
  std::size_t user = 0, lat = 0, lon = 0, timestamp = 0;
  std::size_t width = 0;
};

ColumnMap event_columns(const std::vector<std::string>& header, const std::filesystem::path& path) {
  auto find = [&](std::string_view name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw input_error(fmt::format("'{}': header lacks column '{}' (expected user_id,lat,lon,timestamp)",
                                    path.string(), name));
    return static_cast<std::size_t>(it - header.begin());
  };
  ColumnMap cols;
  cols.user = find("user_id");
  cols.lat = find("lat");
  cols.lon = find("lon");
  cols.timestamp = find("timestamp");
  cols.width = header.size();
  return cols;
}

std::optional<MovementEvent> parse_csv_event(std::string_view line, const ColumnMap& cols) {
  auto fields = detail::split_csv(line);
  if (!fields || fields->size() != cols.width) return std::nullopt;
  const auto& f = *fields;
  auto lat = detail::parse_double(f[cols.lat]);
  auto lon = detail::parse_double(f[cols.lon]);
  auto ts = detail::parse_int(f[cols.timestamp]);
  if (f[cols.user].empty() || !lat || !lon || !ts || *ts < 0) return std::nullopt;
  if (!valid_latlon(*lat, *lon)) return std::nullopt;
  return MovementEvent{f[cols.user], {*lat, *lon}, *ts};
}

std::optional<MovementEvent> parse_json_event(std::string_view line) {
  auto obj = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded() || !obj.is_object()) return std::nullopt;
  auto user = obj.find("user_id");
  auto lat = obj.find("lat");
  auto lon = obj.find("lon");
  auto ts = obj.find("timestamp");
  if (user == obj.end() || lat == obj.end() || lon == obj.end() || ts == obj.end()) return std::nullopt;

  MovementEvent ev;
  if (user->is_string()) {
    ev.user_id = user->get<std::string>();
  } else if (user->is_number_integer()) {
    ev.user_id = std::to_string(user->get<std::int64_t>());
  } else {
    return std::nullopt;
  }
  if (ev.user_id.empty() || !lat->is_number() || !lon->is_number() || !ts->is_number_integer())
    return std::nullopt;
  ev.position = {lat->get<double>(), lon->get<double>()};
  ev.timestamp = ts->get<std::int64_t>();
  if (ev.timestamp < 0 || !valid_latlon(ev.position.lat, ev.position.lon)) return std::nullopt;
  return ev;
}

}  // namespace

void RejectionReport::reject(std::size_t line) {
  ++rejected;
  if (sample_lines.size() < kMaxSamples) sample_lines.push_back(line);
}

EventFormat parse_event_format(const std::string& name) {
  if (name == "csv") return EventFormat::Csv;
  if (name == "jsonl") return EventFormat::Jsonl;
  throw config_error(fmt::format("unknown events format '{}' (expected csv or jsonl)", name));
}

EventFormat event_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".ndjson" || ext == ".json") return EventFormat::Jsonl;
  return EventFormat::Csv;
}

LoadedEvents load_events(const std::filesystem::path& path, EventFormat format) {
  auto in = open_input(path);
  LoadedEvents out;
  std::string line;
  std::size_t line_no = 0;
  std::optional<ColumnMap> cols;

  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;

    if (format == EventFormat::Csv && !cols) {
      auto header = detail::split_csv(line);
      if (!header) throw input_error(fmt::format("'{}': unreadable header", path.string()));
      cols = event_columns(*header, path);
      continue;
    }

    ++out.rejections.rows;
    auto ev = format == EventFormat::Csv ? parse_csv_event(line, *cols) : parse_json_event(line);
    if (ev) {
      out.events.push_back(std::move(*ev));
    } else {
      out.rejections.reject(line_no);
    }
  }
  if (format == EventFormat::Csv && !cols)
    throw input_error(fmt::format("'{}': missing CSV header", path.string()));

  if (out.rejections.rows > 0 && 2 * out.rejections.rejected > out.rejections.rows) {
    throw input_error(fmt::format("'{}': format mismatch, {} of {} rows malformed", path.string(),
                                  out.rejections.rejected, out.rejections.rows));
  }
  return out;
}

LocationRegistry::LocationRegistry(std::vector<Location> locations) : locations_(std::move(locations)) {
  std::set<std::pair<double, double>> seen;
  for (std::size_t i = 0; i < locations_.size(); ++i) {
    const auto& p = locations_[i].position;
    if (!valid_latlon(p.lat, p.lon))
      throw input_error(fmt::format("location {} has out-of-range coordinates ({}, {})",
                                    locations_[i].source_id, p.lat, p.lon));
    if (!seen.emplace(p.lat, p.lon).second)
      throw input_error(fmt::format("location {} duplicates the coordinates of another location",
                                    locations_[i].source_id));
  }
}

LocationRegistry LocationRegistry::restrict(std::span<const LocationId> ids) const {
  std::vector<Location> subset;
  subset.reserve(ids.size());
  for (LocationId id : ids) subset.push_back((*this)[id]);
  return LocationRegistry(std::move(subset));
}

LocationRegistry load_locations(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::vector<std::string>> header;
  std::size_t c_id = 0, c_lat = 0, c_lon = 0;
  std::optional<std::size_t> c_name;
  std::map<std::int64_t, Location> by_id;

  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    if (!fields) throw input_error(fmt::format("'{}' line {}: unterminated quote", path.string(), line_no));
    if (!header) {
      header = *fields;
      auto col = [&](std::string_view name) -> std::optional<std::size_t> {
        auto it = std::find(header->begin(), header->end(), name);
        if (it == header->end()) return std::nullopt;
        return static_cast<std::size_t>(it - header->begin());
      };
      auto id = col("location_id"), lat = col("lat"), lon = col("lon");
      if (!id || !lat || !lon)
        throw input_error(fmt::format("'{}': header must contain location_id,lat,lon", path.string()));
      c_id = *id;
      c_lat = *lat;
      c_lon = *lon;
      c_name = col("name");
      continue;
    }
    const auto& f = *fields;
    if (f.size() != header->size())
      throw input_error(fmt::format("'{}' line {}: expected {} fields", path.string(), line_no, header->size()));
    auto id = detail::parse_int(f[c_id]);
    auto lat = detail::parse_double(f[c_lat]);
    auto lon = detail::parse_double(f[c_lon]);
    if (!id || !lat || !lon || !valid_latlon(*lat, *lon))
      throw input_error(fmt::format("'{}' line {}: malformed location row", path.string(), line_no));
    Location loc{{*lat, *lon}, c_name ? f[*c_name] : std::string(), *id};
    if (!by_id.emplace(*id, std::move(loc)).second)
      throw input_error(fmt::format("'{}' line {}: duplicate location_id {}", path.string(), line_no, *id));
  }
  if (!header) throw input_error(fmt::format("'{}': missing header", path.string()));

  std::vector<Location> locations;
  locations.reserve(by_id.size());
  for (auto& [id, loc] : by_id) locations.push_back(std::move(loc));
  return LocationRegistry(std::move(locations));
}

void write_locations(const std::filesystem::path& path, const LocationRegistry& registry) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(fmt::format("cannot write '{}'", path.string()));
  out << "location_id,lat,lon,name\n";
  for (const auto& loc : registry.locations()) {
    out << fmt::format("{},{},{},{}\n", loc.source_id, loc.position.lat, loc.position.lon,
                       detail::csv_field(loc.name));
  }
}

LocationId nearest_location(const LocationRegistry& registry, const LatLon& p) {
  LocationId best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const double d = haversine_km(p, registry.position(static_cast<LocationId>(i)));
    if (d < best_d) {
      best_d = d;
      best = static_cast<LocationId>(i);
    }
  }
  return best;
}

std::vector<Assignment> assign_events(std::span<const MovementEvent> events,
                                      const LocationRegistry& registry) {
  if (registry.empty()) throw input_error("assign_events: empty location registry");

  struct TripleHash {
    std::size_t operator()(const Assignment& a) const noexcept {
      std::size_t h = std::hash<std::string>{}(a.user_id);
      h ^= std::hash<std::int64_t>{}(a.location) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h ^= std::hash<std::int64_t>{}(a.timestamp) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      return h;
    }
  };
  std::unordered_set<Assignment, TripleHash> seen;
  std::vector<Assignment> out;
  out.reserve(events.size());
  for (const auto& ev : events) {
    Assignment a{ev.user_id, nearest_location(registry, ev.position), ev.timestamp};
    if (seen.insert(a).second) out.push_back(std::move(a));
  }
  return out;
}

std::int64_t WeightedGraph::total_weight() const {
  std::int64_t w = 0;
  for (const auto& e : edges) w += e.weight;
  return w;
}

WeightedGraph build_graph(std::span<const Assignment> assignments, const LocationRegistry& registry) {
  if (assignments.empty()) throw stage_error("build_graph", "no assignments");

  std::unordered_map<std::string_view, std::size_t> user_index;
  std::vector<std::vector<LocationId>> visits;
  for (const auto& a : assignments) {
    if (a.location < 0 || static_cast<std::size_t>(a.location) >= registry.size())
      throw stage_error("build_graph", fmt::format("location id {} outside registry", a.location));
    auto [it, inserted] = user_index.try_emplace(a.user_id, visits.size());
    if (inserted) visits.emplace_back();
    visits[it->second].push_back(a.location);
  }

  WeightedGraph g;
  g.n = registry.size();
  g.location_users.assign(g.n, 0);
  std::map<std::pair<LocationId, LocationId>, std::int64_t> weights;
  for (auto& locs : visits) {
    std::sort(locs.begin(), locs.end());
    locs.erase(std::unique(locs.begin(), locs.end()), locs.end());
    for (std::size_t i = 0; i < locs.size(); ++i) {
      ++g.location_users[static_cast<std::size_t>(locs[i])];
      for (std::size_t j = i + 1; j < locs.size(); ++j) ++weights[{locs[i], locs[j]}];
    }
  }

  g.edges.reserve(weights.size());
  for (const auto& [key, w] : weights) {
    const auto [u, v] = key;
    g.edges.push_back({u, v, w, haversine_km(registry.position(u), registry.position(v))});
  }
  return g;
}

FilteredGraph filter_min_degree(const WeightedGraph& graph, const LocationRegistry& registry,
                                std::int64_t min_users, DegreeMode mode) {
  if (min_users < 0) throw config_error("min_users must be >= 0");
  if (registry.size() != graph.n)
    throw stage_error("filter_min_degree", "registry and graph sizes differ");

  std::vector<std::int64_t> activity(graph.n, 0);
  if (mode == DegreeMode::DistinctUsers) {
    if (graph.location_users.size() != graph.n)
      throw stage_error("filter_min_degree", "graph carries no per-location user counts");
    activity = graph.location_users;
  } else {
    for (const auto& e : graph.edges) {
      ++activity[static_cast<std::size_t>(e.u)];
      ++activity[static_cast<std::size_t>(e.v)];
    }
  }

  FilteredGraph out;
  std::vector<LocationId> new_id(graph.n, -1);
  for (std::size_t i = 0; i < graph.n; ++i) {
    if (activity[i] >= min_users) {
      new_id[i] = static_cast<LocationId>(out.kept.size());
      out.kept.push_back(static_cast<LocationId>(i));
    }
  }
  if (out.kept.size() < 3)
    throw stage_error("filter_min_degree",
                      fmt::format("only {} locations reach min_users={} (at least 3 required)",
                                  out.kept.size(), min_users));

  out.registry = registry.restrict(out.kept);
  out.graph.n = out.kept.size();
  if (!graph.location_users.empty()) {
    out.graph.location_users.reserve(out.kept.size());
    for (LocationId old : out.kept) out.graph.location_users.push_back(graph.location_users[static_cast<std::size_t>(old)]);
  }
  for (const auto& e : graph.edges) {
    const LocationId u = new_id[static_cast<std::size_t>(e.u)];
    const LocationId v = new_id[static_cast<std::size_t>(e.v)];
    if (u >= 0 && v >= 0) out.graph.edges.push_back({u, v, e.weight, e.distance_km});
  }
  return out;
}

}  // namespace natscale
