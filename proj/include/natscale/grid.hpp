#pragma once

#include <cstddef>

#include "natscale/ingest.hpp"

namespace natscale {

struct LatLonBox {
  double lat_min = 0.0;
  double lon_min = 0.0;
  double lat_max = 0.0;
  double lon_max = 0.0;
};

inline constexpr std::size_t kMaxGridSeeds = 1'000'000;

/// Regular seed grid covering `box`. Each axis gets max(ceil(extent / spacing), 1) + 1
/// evenly spaced seeds from edge to edge, so corners are always seeds and the actual
/// spacing never exceeds the requested one. Extents are measured in the equirectangular
/// plane at the box's centre latitude. Seeds are numbered row by row from the
/// south-west corner.
LocationRegistry make_grid(const LatLonBox& box, double spacing_km);

}  // namespace natscale
