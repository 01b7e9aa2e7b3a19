#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cenergy/providers.hpp"

namespace cenergy::providers {

namespace {

using geodesy::MercatorPoint;

std::vector<MercatorPoint> project(std::span<const GeoPoint> ring)
{
  std::vector<MercatorPoint> out;
  out.reserve(ring.size());
  for (const auto& p : ring) out.push_back(geodesy::to_mercator(p));
  return out;
}

MercatorPoint centroid_of(std::span<const MercatorPoint> ring)
{
  // Relative to the first vertex for conditioning.
  const MercatorPoint o = ring[0];
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const double x0 = ring[i].x - o.x, y0 = ring[i].y - o.y;
    const double x1 = ring[(i + 1) % ring.size()].x - o.x, y1 = ring[(i + 1) % ring.size()].y - o.y;
    const double c = x0 * y1 - x1 * y0;
    a2 += c;
    cx += (x0 + x1) * c;
    cy += (y0 + y1) * c;
  }
  if (a2 == 0.0) {
    double sx = 0.0, sy = 0.0;
    for (const auto& p : ring) {
      sx += p.x - o.x;
      sy += p.y - o.y;
    }
    const auto n = static_cast<double>(ring.size());
    return {o.x + sx / n, o.y + sy / n};
  }
  return {o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2)};
}

double ring_area(std::span<const MercatorPoint> ring)
{
  double a2 = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const auto& p = ring[i];
    const auto& q = ring[(i + 1) % ring.size()];
    a2 += (p.x - ring[0].x) * (q.y - ring[0].y) - (q.x - ring[0].x) * (p.y - ring[0].y);
  }
  return std::abs(a2) / 2.0;
}

// Even-odd rule over all rings, so holes and multi-part records both work.
bool contains(const std::vector<std::vector<MercatorPoint>>& rings, const MercatorPoint& p)
{
  bool inside = false;
  for (const auto& ring : rings) {
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
      const auto& a = ring[i];
      const auto& b = ring[j];
      if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
    }
  }
  return inside;
}

std::vector<GeoPoint> ring_from(const nlohmann::json& arr)
{
  std::vector<GeoPoint> ring;
  for (const auto& c : arr) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
      throw Error(ErrorKind::Parse, "malformed coordinate");
    const GeoPoint p{c[0].get<double>(), c[1].get<double>()};
    if (!std::isfinite(p.lon) || !std::isfinite(p.lat) || std::abs(p.lon) > 180.0 || std::abs(p.lat) > 90.0)
      throw Error(ErrorKind::Parse, "coordinate out of range");
    ring.push_back(p);
  }
  if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3) throw Error(ErrorKind::Parse, "ring has fewer than 3 points");
  return ring;
}

}  // namespace

MercatorPoint ring_centroid(std::span<const GeoPoint> ring)
{
  if (ring.empty()) throw Error(ErrorKind::InvalidArgument, "centroid of empty ring");
  std::vector<GeoPoint> open(ring.begin(), ring.end());
  if (open.size() > 1 && open.front() == open.back()) open.pop_back();
  const auto m = project(open);
  return centroid_of(m);
}

HeightIndex::HeightIndex(std::vector<HeightRecord> records)
{
  for (auto& rec : records) {
    if (!std::isfinite(rec.height) || rec.height <= 0.0 || rec.rings.empty()) {
      ++skipped_;
      continue;
    }
    Entry e;
    e.min_x = e.min_y = std::numeric_limits<double>::infinity();
    e.max_x = e.max_y = -std::numeric_limits<double>::infinity();
    double best_area = -1.0;
    for (const auto& ring : rec.rings) {
      auto m = project(ring);
      for (const auto& p : m) {
        e.min_x = std::min(e.min_x, p.x);
        e.max_x = std::max(e.max_x, p.x);
        e.min_y = std::min(e.min_y, p.y);
        e.max_y = std::max(e.max_y, p.y);
      }
      const double area = ring_area(m);
      if (area > best_area) {
        best_area = area;
        e.centroid = centroid_of(m);
      }
      e.rings.push_back(std::move(m));
    }
    e.record = std::move(rec);
    entries_.push_back(std::move(e));
  }
}

HeightIndex HeightIndex::parse(std::istream& in)
{
  std::vector<HeightRecord> records;
  std::size_t malformed = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      if (!obj.is_object() || !obj.contains("geometry") || !obj["geometry"].is_array() || obj["geometry"].empty())
        throw Error(ErrorKind::Parse, "record without geometry");
      HeightRecord rec;
      const auto& geom = obj["geometry"];
      const bool multi = geom[0].is_array() && !geom[0].empty() && geom[0][0].is_array();
      if (multi) {
        for (const auto& r : geom) rec.rings.push_back(ring_from(r));
      } else {
        rec.rings.push_back(ring_from(geom));
      }
      const auto h = obj.find("height");
      rec.height = (h != obj.end() && h->is_number()) ? h->get<double>() : std::numeric_limits<double>::quiet_NaN();
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception&) {
      ++malformed;
    } catch (const Error&) {
      ++malformed;
    }
  }
  HeightIndex index(std::move(records));
  index.malformed_ = malformed;
  return index;
}

HeightIndex HeightIndex::load(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read height extract " + path.string());
  return parse(in);
}

std::optional<double> HeightIndex::match(std::span<const GeoPoint> footprint) const
{
  if (footprint.size() < 3 || entries_.empty()) return std::nullopt;
  const MercatorPoint c = ring_centroid(footprint);
  const double scale = geodesy::ground_scale(geodesy::from_mercator(c).lat);
  auto ground_distance = [&](const MercatorPoint& p) { return std::hypot(p.x - c.x, p.y - c.y) * scale; };

  const Entry* best_container = nullptr;
  double best_container_d = std::numeric_limits<double>::infinity();
  const Entry* nearest = nullptr;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (const auto& e : entries_) {
    const double d = ground_distance(e.centroid);
    if (c.x >= e.min_x && c.x <= e.max_x && c.y >= e.min_y && c.y <= e.max_y && contains(e.rings, c) &&
        d < best_container_d) {
      best_container = &e;
      best_container_d = d;
    }
    if (d < nearest_d) {
      nearest = &e;
      nearest_d = d;
    }
  }
  if (best_container) return best_container->record.height;
  if (nearest && nearest_d <= kFallbackRadiusM) return nearest->record.height;
  return std::nullopt;
}

}  // namespace cenergy::providers
