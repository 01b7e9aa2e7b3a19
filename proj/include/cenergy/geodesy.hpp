#pragma once

// Spherical Web Mercator (EPSG:3857) <-> WGS84 geographic (EPSG:4326).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include "cenergy/error.hpp"

namespace cenergy::geodesy {

inline constexpr double kEarthRadius = 6378137.0;
inline constexpr double kLatMax = 85.05112878;

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct MercatorPoint {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const MercatorPoint&, const MercatorPoint&) = default;
};

struct GeoBBox {
  double west = 0.0;
  double south = 0.0;
  double east = 0.0;
  double north = 0.0;

  bool contains(const GeoPoint& p) const
  {
    return p.lon >= west && p.lon <= east && p.lat >= south && p.lat <= north;
  }
  double area_deg2() const { return (east - west) * (north - south); }
  GeoBBox expanded(double margin) const { return {west - margin, south - margin, east + margin, north + margin}; }

  friend bool operator==(const GeoBBox&, const GeoBBox&) = default;
};

inline double to_radians(double deg) { return deg * (std::numbers::pi / 180.0); }
inline double to_degrees(double rad) { return rad * (180.0 / std::numbers::pi); }

inline MercatorPoint to_mercator(const GeoPoint& p)
{
  if (!std::isfinite(p.lon) || !std::isfinite(p.lat))
    throw Error(ErrorKind::InvalidArgument, "to_mercator: non-finite coordinate");
  const double lat = std::clamp(p.lat, -kLatMax, kLatMax);
  // asinh(tan(phi)) == ln(tan(pi/4 + phi/2)), but is exact at the equator.
  const double y = kEarthRadius * std::asinh(std::tan(to_radians(lat)));
  // The rounded LAT_MAX lands 0.25 mm past the square-world edge; pin it there.
  const double edge = kEarthRadius * std::numbers::pi;
  return {kEarthRadius * to_radians(p.lon), std::clamp(y, -edge, edge)};
}

inline GeoPoint from_mercator(const MercatorPoint& p)
{
  if (!std::isfinite(p.x) || !std::isfinite(p.y))
    throw Error(ErrorKind::InvalidArgument, "from_mercator: non-finite coordinate");
  // atan(sinh(y/R)) == 2 atan(exp(y/R)) - pi/2
  return {to_degrees(p.x / kEarthRadius), to_degrees(std::atan(std::sinh(p.y / kEarthRadius)))};
}

/// Mercator scale factor at a latitude: ground meters = mercator meters * factor.
inline double ground_scale(double lat_deg) { return std::cos(to_radians(std::clamp(lat_deg, -kLatMax, kLatMax))); }

inline GeoBBox bbox_of_points(std::span<const GeoPoint> points)
{
  if (points.empty())
    throw Error(ErrorKind::InvalidArgument, "bbox of empty point set");
  GeoBBox box{points[0].lon, points[0].lat, points[0].lon, points[0].lat};
  for (const auto& p : points) {
    if (!std::isfinite(p.lon) || !std::isfinite(p.lat))
      throw Error(ErrorKind::InvalidArgument, "bbox: non-finite coordinate");
    box.west = std::min(box.west, p.lon);
    box.east = std::max(box.east, p.lon);
    box.south = std::min(box.south, p.lat);
    box.north = std::max(box.north, p.lat);
  }
  if (box.east - box.west > 180.0)
    throw Error(ErrorKind::InvalidArgument, "bbox spans the antimeridian");
  if (!(box.west < box.east) || !(box.south < box.north))
    throw Error(ErrorKind::InvalidArgument, "degenerate bbox (zero width or height)");
  if (box.west < -180.0 || box.east > 180.0 || box.south < -90.0 || box.north > 90.0)
    throw Error(ErrorKind::InvalidArgument, "bbox outside geographic range");
  return box;
}

inline GeoBBox bbox_of_ring(std::span<const GeoPoint> ring)
{
  if (ring.size() < 3)
    throw Error(ErrorKind::InvalidArgument, "ring needs at least 3 points");
  return bbox_of_points(ring);
}

}  // namespace cenergy::geodesy
