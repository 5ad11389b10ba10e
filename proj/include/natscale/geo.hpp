#pragma once

#include <cmath>
#include <numbers>

namespace natscale {

/// Mean Earth radius (IUGG), kilometres.
inline constexpr double kEarthRadiusKm = 6371.0088;

struct LatLon {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees

  friend bool operator==(const LatLon&, const LatLon&) = default;
};

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Great-circle distance in kilometres (haversine form).
inline double haversine_km(const LatLon& a, const LatLon& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  if (h > 1.0) h = 1.0;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
  Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double k) const { return {x * k, y * k}; }
};

inline double dot(const Point2& a, const Point2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Point2& a, const Point2& b) { return a.x * b.y - a.y * b.x; }
inline double norm2(const Point2& a) { return dot(a, a); }

/// Equirectangular projection centred on a reference point; plane units are km.
/// x grows eastward (longitude scaled by cos of the reference latitude), y northward.
class Equirectangular {
 public:
  Equirectangular() = default;
  explicit Equirectangular(LatLon center)
      : center_(center), cos_lat_(std::cos(deg2rad(center.lat))) {}

  Point2 project(const LatLon& p) const {
    return {kEarthRadiusKm * deg2rad(p.lon - center_.lon) * cos_lat_,
            kEarthRadiusKm * deg2rad(p.lat - center_.lat)};
  }

  LatLon unproject(const Point2& p) const {
    return {center_.lat + rad2deg(p.y / kEarthRadiusKm),
            center_.lon + rad2deg(p.x / (kEarthRadiusKm * cos_lat_))};
  }

  const LatLon& center() const { return center_; }

 private:
  LatLon center_{};
  double cos_lat_ = 1.0;
};

}  // namespace natscale
