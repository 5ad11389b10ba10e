#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "natscale/geometry.hpp"

namespace natscale {

/// Coordinates are written with this many decimals (about 1 cm) so reruns diff cleanly.
inline constexpr int kCoordinateDecimals = 7;

/// FeatureCollection of LineString features with properties {scales, run_id}.
void write_boundaries_geojson(const std::filesystem::path& path, std::span<const BoundarySegment> segments,
                              const std::string& run_id);

struct CellColumn {
  std::string name;
  std::vector<Label> values;  // one per cell
};

/// FeatureCollection of cell Polygons with {location_id, <column>...} properties.
/// `tuples`, when non-empty, is added as a `multiscale` array property.
void write_cells_geojson(const std::filesystem::path& path, const VoronoiDiagram& diagram,
                         std::span<const std::int64_t> location_ids, std::span<const CellColumn> columns,
                         std::span<const ScaleTuple> tuples = {});

}  // namespace natscale
