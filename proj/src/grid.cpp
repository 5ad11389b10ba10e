#include "natscale/grid.hpp"

#include <cmath>

#include <fmt/format.h>

#include "natscale/error.hpp"

namespace natscale {

namespace {

std::size_t axis_count(double extent_km, double spacing_km) {
  // Relative slack keeps exact multiples (10 km / 5 km) from rounding up.
  const double steps = std::ceil(extent_km / spacing_km * (1.0 - 1e-9));
  return static_cast<std::size_t>(std::max(steps, 1.0)) + 1;
}

}  // namespace

LocationRegistry make_grid(const LatLonBox& box, double spacing_km) {
  if (!(spacing_km > 0.0)) throw config_error("grid spacing must be > 0");
  if (!(box.lat_max > box.lat_min) || !(box.lon_max > box.lon_min))
    throw config_error("grid bounding box is degenerate");
  if (box.lat_min < -90.0 || box.lat_max > 90.0 || box.lon_min < -180.0 || box.lon_max > 180.0)
    throw config_error("grid bounding box outside lat/lon range");

  const Equirectangular proj({(box.lat_min + box.lat_max) / 2.0, (box.lon_min + box.lon_max) / 2.0});
  const Point2 sw = proj.project({box.lat_min, box.lon_min});
  const Point2 ne = proj.project({box.lat_max, box.lon_max});
  const double width = ne.x - sw.x;
  const double height = ne.y - sw.y;

  const double nx_f = std::max(std::ceil(width / spacing_km), 1.0) + 1.0;
  const double ny_f = std::max(std::ceil(height / spacing_km), 1.0) + 1.0;
  if (nx_f * ny_f > static_cast<double>(kMaxGridSeeds))
    throw config_error(fmt::format("grid of about {:.0f} seeds exceeds the limit of {}", nx_f * ny_f, kMaxGridSeeds));
  const std::size_t nx = axis_count(width, spacing_km);
  const std::size_t ny = axis_count(height, spacing_km);

  std::vector<Location> seeds;
  seeds.reserve(nx * ny);
  for (std::size_t r = 0; r < ny; ++r) {
    const double lat = box.lat_min + (box.lat_max - box.lat_min) * static_cast<double>(r) / static_cast<double>(ny - 1);
    for (std::size_t c = 0; c < nx; ++c) {
      const double lon = box.lon_min + (box.lon_max - box.lon_min) * static_cast<double>(c) / static_cast<double>(nx - 1);
      const auto id = static_cast<std::int64_t>(seeds.size());
      seeds.push_back({{lat, lon}, fmt::format("grid_{}_{}", r, c), id});
    }
  }
  return LocationRegistry(std::move(seeds));
}

}  // namespace natscale
