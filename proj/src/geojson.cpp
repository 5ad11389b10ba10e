#include "natscale/geojson.hpp"

#include <fstream>

#include <fmt/format.h>

#include "natscale/error.hpp"
#include "json.hpp"

namespace natscale {

namespace {

std::string coord(const LatLon& p) {
  // GeoJSON order is [lon, lat]. Adding 0.0 folds -0.0 into 0.0.
  return fmt::format("[{:.{}f},{:.{}f}]", p.lon + 0.0, kCoordinateDecimals, p.lat + 0.0, kCoordinateDecimals);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(fmt::format("cannot write '{}'", path.string()));
  return out;
}

}  // namespace

void write_boundaries_geojson(const std::filesystem::path& path, std::span<const BoundarySegment> segments,
                              const std::string& run_id) {
  auto out = open_output(path);
  const std::string run = nlohmann::json(run_id).dump();
  out << "{\"type\":\"FeatureCollection\",\"features\":[";
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    out << (i ? ",\n" : "\n");
    out << "{\"type\":\"Feature\",\"geometry\":{\"type\":\"LineString\",\"coordinates\":[" << coord(s.from) << ','
        << coord(s.to) << "]},\"properties\":{\"scales\":[";
    for (std::size_t k = 0; k < s.scales.size(); ++k) out << (k ? "," : "") << s.scales[k];
    out << "],\"run_id\":" << run << "}}";
  }
  out << "\n]}\n";
}

void write_cells_geojson(const std::filesystem::path& path, const VoronoiDiagram& diagram,
                         std::span<const std::int64_t> location_ids, std::span<const CellColumn> columns,
                         std::span<const ScaleTuple> tuples) {
  if (location_ids.size() != diagram.size()) throw stage_error("export", "cell id list does not match the diagram");
  auto out = open_output(path);
  out << "{\"type\":\"FeatureCollection\",\"features\":[";
  for (std::size_t i = 0; i < diagram.size(); ++i) {
    const auto& cell = diagram.cell(static_cast<LocationId>(i));
    out << (i ? ",\n" : "\n");
    out << "{\"type\":\"Feature\",\"geometry\":{\"type\":\"Polygon\",\"coordinates\":[[";
    for (std::size_t k = 0; k <= cell.vertices.size(); ++k) {
      const auto& v = cell.vertices[k % cell.vertices.size()];
      out << (k ? "," : "") << coord(diagram.projection().unproject(v));
    }
    out << "]]},\"properties\":{\"location_id\":" << location_ids[i];
    for (const auto& col : columns) out << ',' << nlohmann::json(col.name).dump() << ':' << col.values[i];
    if (!tuples.empty()) {
      out << ",\"multiscale\":[";
      for (std::size_t k = 0; k < tuples[i].size(); ++k) out << (k ? "," : "") << tuples[i][k];
      out << ']';
    }
    out << "}}";
  }
  out << "\n]}\n";
}

}  // namespace natscale
