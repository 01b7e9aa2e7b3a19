#pragma once

// Mesh and path construction in Web Mercator meters: terrain triangulation,
// polyline densification and draping, ear-clipping, and prism extrusion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cenergy/error.hpp"
#include "cenergy/geodesy.hpp"
#include "cenergy/raster.hpp"

namespace cenergy::geometry {

using geodesy::GeoPoint;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct Triangle {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::uint32_t c = 0;
  friend bool operator==(const Triangle&, const Triangle&) = default;
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return vertices.empty(); }

  void validate() const
  {
    for (const auto& v : vertices)
      if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
        throw Error(ErrorKind::InvalidArgument, "mesh has a non-finite vertex");
    const auto n = vertices.size();
    for (const auto& t : triangles) {
      if (t.a >= n || t.b >= n || t.c >= n)
        throw Error(ErrorKind::InvalidArgument, "mesh triangle index out of range");
      if (t.a == t.b || t.b == t.c || t.a == t.c)
        throw Error(ErrorKind::InvalidArgument, "mesh triangle has repeated indices");
    }
  }

  friend bool operator==(const TriMesh&, const TriMesh&) = default;
};

enum class LineKind { Road, Power };

struct Polyline3 {
  std::vector<Vec3> points;
  LineKind kind = LineKind::Road;
  friend bool operator==(const Polyline3&, const Polyline3&) = default;
};

/// Simple polygon, implicitly closed (the first point is not repeated at the end).
using Ring2 = std::vector<Vec2>;

/// Triangulates the valid pixel centers of a DEM. Each 2x2 cell proposes
/// (TL, BL, BR) and (TL, BR, TR); a triangle is kept when all three of its
/// pixels are valid. Vertices are numbered in row-major order over valid pixels.
inline TriMesh grid_mesh(const raster::DemGrid& grid)
{
  grid.validate();
  constexpr std::uint32_t kNone = UINT32_MAX;
  std::vector<std::uint32_t> index(grid.rows * grid.cols, kNone);
  TriMesh mesh;
  mesh.vertices.reserve(grid.values.size());
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      if (!grid.valid(r, c)) continue;
      const auto v = raster::grid_vertex_mercator(grid, r, c);
      index[r * grid.cols + c] = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.push_back({v.position.x, v.position.y, static_cast<double>(v.elevation)});
    }
  }
  mesh.triangles.reserve(2 * (grid.rows - 1) * (grid.cols - 1));
  for (std::size_t r = 0; r + 1 < grid.rows; ++r) {
    for (std::size_t c = 0; c + 1 < grid.cols; ++c) {
      const auto tl = index[r * grid.cols + c];
      const auto tr = index[r * grid.cols + c + 1];
      const auto bl = index[(r + 1) * grid.cols + c];
      const auto br = index[(r + 1) * grid.cols + c + 1];
      if (tl != kNone && bl != kNone && br != kNone) mesh.triangles.push_back({tl, bl, br});
      if (tl != kNone && br != kNone && tr != kNone) mesh.triangles.push_back({tl, br, tr});
    }
  }
  return mesh;
}

/// Ground length of a segment: Mercator distance scaled to the midpoint latitude.
inline double segment_length_m(const GeoPoint& a, const GeoPoint& b)
{
  const auto ma = geodesy::to_mercator(a);
  const auto mb = geodesy::to_mercator(b);
  return std::hypot(mb.x - ma.x, mb.y - ma.y) * geodesy::ground_scale((a.lat + b.lat) / 2.0);
}

/// Splits each segment into ceil(L / max_step) equal parts. Input points are kept.
inline std::vector<GeoPoint> densify(std::span<const GeoPoint> points, double max_step)
{
  if (!(max_step > 0.0) || !std::isfinite(max_step))
    throw Error(ErrorKind::InvalidArgument, "densify step must be positive");
  if (points.size() < 2) throw Error(ErrorKind::InvalidArgument, "densify needs at least 2 points");
  std::vector<GeoPoint> out;
  out.reserve(points.size());
  out.push_back(points[0]);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& a = points[i - 1];
    const auto& b = points[i];
    const double len = segment_length_m(a, b);
    const auto parts = len > 0.0 ? static_cast<std::size_t>(std::ceil(len / max_step)) : 0;
    for (std::size_t k = 1; k < parts; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(parts);
      out.push_back({a.lon + t * (b.lon - a.lon), a.lat + t * (b.lat - a.lat)});
    }
    out.push_back(b);
  }
  return out;
}

/// Lifts points onto the DEM surface plus z_offset. Points without an
/// elevation are dropped; fewer than two survivors yields nullopt.
inline std::optional<Polyline3> drape(std::span<const GeoPoint> points, const raster::DemGrid& grid, double z_offset,
                                      LineKind kind = LineKind::Road)
{
  Polyline3 line;
  line.kind = kind;
  line.points.reserve(points.size());
  for (const auto& p : points) {
    const auto h = raster::sample_bilinear(grid, p);
    if (!h) continue;
    const auto m = geodesy::to_mercator(p);
    line.points.push_back({m.x, m.y, *h + z_offset});
  }
  if (line.points.size() < 2) return std::nullopt;
  return line;
}

/// Signed shoelace area; positive for counter-clockwise rings.
inline double shoelace_area(std::span<const Vec2> ring)
{
  if (ring.size() < 3) return 0.0;
  const Vec2 o = ring[0];
  double twice = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Vec2& p = ring[i];
    const Vec2& q = ring[(i + 1) % ring.size()];
    twice += (p.x - o.x) * (q.y - o.y) - (q.x - o.x) * (p.y - o.y);
  }
  return twice / 2.0;
}

namespace detail {

inline double cross(const Vec2& o, const Vec2& a, const Vec2& b)
{
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline bool on_segment(const Vec2& p, const Vec2& a, const Vec2& b)
{
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

inline int sign(double v) { return (v > 0.0) - (v < 0.0); }

// Closed-segment intersection, touching and collinear overlap included.
inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2)
{
  const int d1 = sign(cross(q1, q2, p1));
  const int d2 = sign(cross(q1, q2, p2));
  const int d3 = sign(cross(p1, p2, q1));
  const int d4 = sign(cross(p1, p2, q2));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && on_segment(q2, p1, p2)) return true;
  return false;
}

inline bool in_triangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c)
{
  return cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0;
}

// Ring relative to its first vertex; keeps the cross products well conditioned
// for Mercator coordinates in the millions of meters.
inline std::vector<Vec2> localize(std::span<const Vec2> ring)
{
  std::vector<Vec2> out(ring.begin(), ring.end());
  const Vec2 o = ring[0];
  for (auto& p : out) p = {p.x - o.x, p.y - o.y};
  return out;
}

}  // namespace detail

/// Throws unless the ring is a simple polygon with at least 3 distinct
/// vertices and non-zero area.
inline void check_simple(std::span<const Vec2> ring)
{
  using detail::cross;
  const std::size_t n = ring.size();
  if (n < 3) throw Error(ErrorKind::InvalidArgument, "ring needs at least 3 distinct vertices");
  for (const auto& p : ring)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw Error(ErrorKind::InvalidArgument, "ring has a non-finite vertex");
  const auto pts = detail::localize(ring);
  for (std::size_t i = 0; i < n; ++i)
    if (pts[i] == pts[(i + 1) % n])
      throw Error(ErrorKind::InvalidArgument, "ring has repeated consecutive vertices");
  if (shoelace_area(pts) == 0.0) throw Error(ErrorKind::InvalidArgument, "ring is degenerate (zero area)");

  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = pts[i];
    const Vec2& b = pts[(i + 1) % n];
    // Adjacent edge folding back over this one.
    const Vec2& c = pts[(i + 2) % n];
    if (cross(a, b, c) == 0.0) {
      const double dot = (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y);
      if (dot < 0.0) throw Error(ErrorKind::InvalidArgument, "ring is self-intersecting (spike)");
    }
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // edges share vertex 0
      if (detail::segments_intersect(a, b, pts[j], pts[(j + 1) % n]))
        throw Error(ErrorKind::InvalidArgument, "ring is self-intersecting");
    }
  }
}

/// Ear-clipping triangulation of a simple polygon. Returns N-2 triangles indexing
/// into `ring`, each wound counter-clockwise regardless of the input winding.
inline std::vector<Triangle> ear_clip(std::span<const Vec2> ring)
{
  using detail::cross;
  check_simple(ring);
  const auto pts = detail::localize(ring);
  const std::size_t n = pts.size();

  std::vector<std::uint32_t> poly(n);
  std::iota(poly.begin(), poly.end(), 0u);
  if (shoelace_area(pts) < 0.0) std::reverse(poly.begin(), poly.end());

  std::vector<Triangle> out;
  out.reserve(n - 2);

  auto is_ear = [&](std::size_t k) {
    const std::size_t m = poly.size();
    const auto ip = poly[(k + m - 1) % m], ic = poly[k], in = poly[(k + 1) % m];
    const Vec2 &a = pts[ip], &b = pts[ic], &c = pts[in];
    if (cross(a, b, c) <= 0.0) return false;
    for (std::size_t q = 0; q < m; ++q) {
      const auto v = poly[q];
      if (v == ip || v == ic || v == in) continue;
      if (detail::in_triangle(pts[v], a, b, c)) return false;
    }
    return true;
  };

  auto clip = [&](std::size_t k) {
    const std::size_t m = poly.size();
    out.push_back({poly[(k + m - 1) % m], poly[k], poly[(k + 1) % m]});
    poly.erase(poly.begin() + static_cast<std::ptrdiff_t>(k));
  };

  std::size_t k = 0;
  while (poly.size() > 3) {
    const std::size_t m = poly.size();
    bool clipped = false;
    for (std::size_t step = 0; step < m; ++step) {
      const std::size_t cand = (k + step) % m;
      if (is_ear(cand)) {
        clip(cand);
        k = cand % poly.size();
        clipped = true;
        break;
      }
    }
    if (clipped) continue;
    // Only straight (collinear) vertices remain clippable; they form zero-area ears.
    for (std::size_t cand = 0; cand < m; ++cand) {
      const Vec2 &a = pts[poly[(cand + m - 1) % m]], &b = pts[poly[cand]], &c = pts[poly[(cand + 1) % m]];
      if (cross(a, b, c) == 0.0) {
        clip(cand);
        k = cand % poly.size();
        clipped = true;
        break;
      }
    }
    if (!clipped) throw Error(ErrorKind::InvalidArgument, "ear clipping failed: no ear found (ring not simple?)");
  }
  out.push_back({poly[0], poly[1], poly[2]});
  return out;
}

/// Flat-roofed prism: N base vertices at base_z, then N roof vertices at
/// base_z + height. Two outward-facing wall triangles per edge plus the
/// triangulated roof; no floor.
inline TriMesh extrude(std::span<const Vec2> ring, double base_z, double height)
{
  if (!(height > 0.0) || !std::isfinite(height))
    throw Error(ErrorKind::InvalidArgument, "extrusion height must be positive");
  if (!std::isfinite(base_z)) throw Error(ErrorKind::InvalidArgument, "extrusion base must be finite");
  const auto roof = ear_clip(ring);
  const auto n = static_cast<std::uint32_t>(ring.size());
  const bool ccw = shoelace_area(detail::localize(ring)) > 0.0;
  const double top = base_z + height;

  TriMesh mesh;
  mesh.vertices.reserve(2 * n);
  for (const auto& p : ring) mesh.vertices.push_back({p.x, p.y, base_z});
  for (const auto& p : ring) mesh.vertices.push_back({p.x, p.y, top});

  mesh.triangles.reserve(3 * n - 2);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    if (ccw) {
      mesh.triangles.push_back({i, j, n + j});
      mesh.triangles.push_back({i, n + j, n + i});
    } else {
      mesh.triangles.push_back({i, n + j, j});
      mesh.triangles.push_back({i, n + i, n + j});
    }
  }
  for (const auto& t : roof) mesh.triangles.push_back({n + t.a, n + t.b, n + t.c});
  return mesh;
}

inline TriMesh merge_meshes(std::span<const TriMesh> meshes)
{
  TriMesh out;
  std::size_t nv = 0, nt = 0;
  for (const auto& m : meshes) {
    nv += m.vertices.size();
    nt += m.triangles.size();
  }
  out.vertices.reserve(nv);
  out.triangles.reserve(nt);
  for (const auto& m : meshes) {
    const auto offset = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), m.vertices.begin(), m.vertices.end());
    for (const auto& t : m.triangles) out.triangles.push_back({t.a + offset, t.b + offset, t.c + offset});
  }
  return out;
}

}  // namespace cenergy::geometry
